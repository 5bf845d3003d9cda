"""Finite-difference checks of every loss term and of the full objective through a tiny model.

Each check draws a fresh 64-bit instance per seed and reports the worst
norm-relative error between analytic and central-difference gradients.
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable

import numpy as np

from . import losses as Lo
from .autodiff import functional as F
from .autodiff.gradcheck import check_gradients
from .autodiff.tensor import Tensor
from .model import ModelConfig, SeqModel

STEP = 1e-5
TINY = ModelConfig(n=16, C=2, L=3, d=8, N=5, conv_kernels=(3, 3, 3), conv_widths=(4, 4, 6),
                   attn_layers=1, heads=2, ff_mult=2, dropout=0.0, precision="f64")


def _leaf(rng, shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def _banks(rng, domains=3, count=5, d=4):
    return [_leaf(rng, (count, d)) for _ in range(domains)]


def _check_reconstruction(rng):
    x = rng.standard_normal((2, 3, 4, 2))
    xh = _leaf(rng, x.shape)
    return check_gradients(lambda: Lo.reconstruction_loss(x, xh), [xh], STEP)


def _bank_check(fn):
    def run(rng):
        banks = _banks(rng)
        return check_gradients(lambda: fn(banks), banks, STEP)
    return run


def _check_sequence(rng):
    seqs = [_leaf(rng, (2, 4, 6)) for _ in range(3)]
    return check_gradients(lambda: Lo.sequence_level_loss([Lo.domain_correlation(s) for s in seqs]), seqs, STEP)


def _check_pearson(rng):
    h = _leaf(rng, (4, 6))
    probe = rng.standard_normal((4, 4))
    return check_gradients(lambda: F.sum(Lo.pearson_matrix(h) * probe), [h], STEP)


def _check_classification(rng):
    logits = _leaf(rng, (3, 4, 5))
    labels = rng.integers(0, 5, (3, 4))
    return check_gradients(lambda: Lo.classification_loss(F.softmax(logits, axis=-1), labels), [logits], STEP)


def randomize_decoder_output(model: SeqModel, rng) -> None:
    """Replace the zero-initialized decoder output weights so every decoder path carries gradient."""
    state = model.state_dict()
    key = f"decoder.ups.{len(model.decoder.ups) - 1}.weight"
    state[key] = rng.uniform(-0.5, 0.5, state[key].shape)
    model.load_state_dict(state)


def tiny_objective(seed: int, weights: Lo.LossWeights = Lo.LossWeights()):
    """Closure computing the full weighted objective on a tiny f64 model, plus its parameters."""
    rng = np.random.default_rng(seed)
    model = SeqModel(TINY, seed=seed)
    randomize_decoder_output(model, rng)
    model.train()
    x = rng.standard_normal((4, TINY.L, TINY.n, TINY.C))
    y = rng.integers(0, TINY.N, (4, TINY.L))
    dom = np.array([0, 0, 1, 1])

    def objective():
        fb = model.encode(x, dom)
        ce = Lo.classification_loss(model.classify(fb), y)
        rec = Lo.reconstruction_loss(x, model.decode(fb))
        terms = Lo.alignment_terms(fb.features, dom, (0, 1))
        return Lo.total_loss(ce, rec, terms["epoch"], terms["sequence"], weights)

    return objective, model.parameters()


def _check_total(rng):
    objective, params = tiny_objective(int(rng.integers(2**31)))
    return check_gradients(objective, params, STEP, max_coords=3, rng=rng, pooled=True)


CHECKS: Dict[str, Callable[[np.random.Generator], float]] = {
    "reconstruction": _check_reconstruction,
    "epoch_first": _bank_check(Lo.epoch_first_order),
    "epoch_second": _bank_check(Lo.epoch_second_order),
    "epoch_level": _bank_check(Lo.epoch_level_loss),
    "pearson": _check_pearson,
    "sequence": _check_sequence,
    "classification": _check_classification,
    "mmd": _bank_check(lambda banks: Lo.mmd_loss(banks, bandwidth=8.0)),
    "coral": _bank_check(Lo.coral_loss),
    "total_model": _check_total,
}


def run_suite(seeds: Iterable[int] = range(20), names: Iterable[str] = None) -> Dict[str, float]:
    """Worst relative error per check over the given seeds."""
    names = list(CHECKS) if names is None else list(names)
    seeds = list(seeds)
    return {name: max(CHECKS[name](np.random.default_rng([s, i])) for s in seeds)
            for i, name in enumerate(names)}
