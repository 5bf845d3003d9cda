"""Adam with bias correction and coupled (default) or decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam over a fixed, ordered list of parameter tensors.

    ``weight_decay`` is added to the gradient as an L2 term unless
    ``decoupled=True``, in which case it shrinks the parameter directly.
    """

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0, decoupled=False):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                               weight_decay=weight_decay, decoupled=decoupled,
                               m=[np.zeros_like(p.data) for p in self.params],
                               v=[np.zeros_like(p.data) for p in self.params])

    def step(self, grads: dict) -> None:
        missing = [p.name or f"#{i}" for i, p in enumerate(self.params) if p not in grads]
        if missing:
            raise ContractError(f"adam_step: no gradient for parameter(s) {', '.join(missing)}")
        adam_step(self.state, self.params, grads)


def adam_step(state: AdamState, params: Sequence[Tensor], grads: dict) -> None:
    """One Adam update; rebinds each parameter's data array to the new value."""
    for i, p in enumerate(params):
        if p not in grads:
            raise ContractError(f"adam_step: no gradient for parameter {p.name or i}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        g = np.asarray(grads[p], dtype=p.dtype)
        if g.shape != p.shape:
            raise ContractError(f"adam_step: gradient shape {g.shape} != parameter shape {p.shape}")
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * p.data
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * g * g
        state.m[i], state.v[i] = m, v
        update = (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        new = p.data - state.lr * update
        if state.weight_decay and state.decoupled:
            new = new - state.lr * state.weight_decay * p.data
        new = new.astype(p.dtype, copy=False)
        new.flags.writeable = False
        p.data = new
