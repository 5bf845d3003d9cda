"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward


def _scalarize(out: Tensor, rng: np.random.Generator) -> Tensor:
    if out.size == 1:
        return out.reshape(())
    probe = Tensor(rng.standard_normal(out.shape), dtype=out.dtype)
    return (out * probe).sum()


def _rel(a: np.ndarray, n: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return float(np.linalg.norm(a - n) / scale) if scale > 0 else 0.0


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5,
                    max_coords: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                    pooled: bool = False) -> float:
    """Max over ``tensors`` of ``|analytic - numeric| / max(|analytic|, |numeric|)`` (2-norms).

    ``loss_fn`` is re-evaluated with each tensor's data perturbed in place, so it
    must read the tensors afresh on every call and be deterministic.  When
    ``max_coords`` is set only that many randomly chosen coordinates per tensor
    are compared.  ``pooled=True`` measures one relative error over all sampled
    coordinates together; use it for parameter sets where some tensors have
    gradients that vanish identically (e.g. attention key biases), since a
    per-tensor ratio of two round-off-sized vectors carries no information.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    loss = loss_fn()
    grads = backward(loss, tensors)
    worst = 0.0
    all_a, all_n = [], []
    for t in tensors:
        analytic = np.asarray(grads[t], dtype=np.float64).reshape(-1)
        base = t.data.copy()
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort(rng.choice(base.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        flat = base.reshape(-1)
        for j, c in enumerate(coords):
            vals = []
            for sign in (1.0, -1.0):
                pert = flat.copy()
                pert[c] += sign * step
                t.data = pert.reshape(base.shape)
                vals.append(float(loss_fn().data))
            numeric[j] = (vals[0] - vals[1]) / (2.0 * step)
        t.data = base
        a = analytic[coords]
        all_a.append(a)
        all_n.append(numeric)
        worst = max(worst, _rel(a, numeric))
    if pooled:
        return _rel(np.concatenate(all_a), np.concatenate(all_n))
    return worst


def grad_check(op: Callable[..., Tensor], shapes: Sequence[tuple], seed: int = 0, step: float = 1e-5,
               sampler: Optional[Callable[[np.random.Generator, tuple], np.ndarray]] = None) -> float:
    """Check ``op`` at a random 64-bit point with inputs of the given shapes.

    Non-scalar outputs are reduced with a fixed random projection.  ``sampler``
    overrides the standard-normal draw (e.g. to stay away from kinks).
    """
    rng = np.random.default_rng(seed)
    draw = sampler or (lambda r, shape: r.standard_normal(shape))
    inputs = [Tensor(draw(rng, tuple(s)), requires_grad=True, dtype=np.float64) for s in shapes]
    probe_rng_seed = int(rng.integers(2**31))

    def loss_fn():
        return _scalarize(op(*inputs), np.random.default_rng(probe_rng_seed))

    return check_gradients(loss_fn, inputs, step=step)
