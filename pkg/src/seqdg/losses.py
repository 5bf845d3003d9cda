"""Loss terms: reconstruction, epoch-level and sequence-level alignment, cross-entropy,
their weighted total, and the MMD / CORAL baselines.

Domain statistics are computed on whatever features are passed in (in training,
the current balanced mini-batch), and gradients flow through every statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .autodiff import functional as F
from .autodiff.tensor import Tensor
from .errors import ContractError, NonFiniteError, ShapeError

PEARSON_EPS = 1e-8
LOG_EPS = 1e-12
CORAL_SCALE = "1/(4d^2)"


@dataclass
class LossWeights:
    rec: float = 0.5        # reconstruction
    epoch: float = 0.5      # epoch-level alignment
    sequence: float = 0.5   # sequence-level alignment

    def __post_init__(self):
        for name in ("rec", "epoch", "sequence"):
            if getattr(self, name) < 0:
                raise ContractError(f"loss weight {name} must be non-negative")


def _t(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    return Tensor(arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(np.float64))


def _pairs(items: Sequence, what: str, ordered: bool = False):
    if len(items) < 2:
        raise ContractError(f"{what} needs at least 2 domains, got {len(items)}")
    pairs = list(combinations(range(len(items)), 2))
    return pairs, (2.0 if ordered else 1.0)


def _sq_norm(t: Tensor) -> Tensor:
    return F.sum(F.square(t))


# ------------------------------------------------------------------ reconstruction

def reconstruction_loss(x, x_hat) -> Tensor:
    """Mean over sequences and epochs of each epoch's squared Euclidean residual."""
    x, x_hat = _t(x), _t(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"reconstruction_loss: {x.shape} vs {x_hat.shape}")
    if x.ndim < 3:
        raise ShapeError(f"reconstruction_loss expects (B, L, ...), got {x.shape}")
    per_epoch = F.sum(F.square(x_hat - x), axis=tuple(range(2, x.ndim)))
    return F.mean(per_epoch)


# ------------------------------------------------------------------ epoch level

def _bank(f) -> Tensor:
    f = _t(f)
    if f.ndim != 2:
        raise ShapeError(f"feature bank must be (count, d), got {f.shape}")
    if f.shape[0] < 1:
        raise ContractError("empty feature bank")
    return f


def covariance(f: Tensor) -> Tensor:
    """Sample covariance of the rows of ``f`` with 1/(count-1) normalization."""
    count = f.shape[0]
    if count < 2:
        raise ContractError(f"covariance needs >= 2 samples, got {count}")
    centered = f - F.mean(f, axis=0, keepdims=True)
    return F.matmul(F.transpose(centered), centered) * (1.0 / (count - 1))


def epoch_first_order(banks: Sequence, ordered: bool = False) -> Tensor:
    """Sum over domain pairs of the squared distance between mean features."""
    banks = [_bank(b) for b in banks]
    pairs, factor = _pairs(banks, "epoch_first_order", ordered)
    means = [F.mean(b, axis=0) for b in banks]
    total = None
    for i, j in pairs:
        term = _sq_norm(means[i] - means[j])
        total = term if total is None else total + term
    return total * factor if factor != 1.0 else total


def epoch_second_order(banks: Sequence, ordered: bool = False) -> Tensor:
    """Sum over domain pairs of the squared Frobenius distance between covariances."""
    banks = [_bank(b) for b in banks]
    pairs, factor = _pairs(banks, "epoch_second_order", ordered)
    for i, b in enumerate(banks):
        if b.shape[0] < 2:
            raise ContractError(f"domain {i} has {b.shape[0]} feature(s); covariance needs >= 2")
    covs = [covariance(b) for b in banks]
    total = None
    for i, j in pairs:
        term = _sq_norm(covs[i] - covs[j])
        total = term if total is None else total + term
    return total * factor if factor != 1.0 else total


def epoch_level_loss(banks: Sequence, ordered: bool = False) -> Tensor:
    return epoch_first_order(banks, ordered) + epoch_second_order(banks, ordered)


# ------------------------------------------------------------------ sequence level

def pearson_matrix(h) -> Tensor:
    """Correlations between the L epoch vectors of one sequence (or a batch ``(..., L, d)``).

    Statistics run over the d feature coordinates.  Variances are clamped
    below at 1e-8 and the diagonal is pinned to 1.
    """
    h = _t(h)
    if h.ndim < 2 or h.shape[-2] < 2 or h.shape[-1] < 2:
        raise ShapeError(f"pearson_matrix needs (..., L>=2, d>=2), got {h.shape}")
    length = h.shape[-2]
    centered = h - F.mean(h, axis=-1, keepdims=True)
    var = F.mean(F.square(centered), axis=-1, keepdims=True)
    z = centered / F.sqrt(F.clamp_min(var, PEARSON_EPS))
    r = F.matmul(z, F.swapaxes(z, -1, -2)) * (1.0 / h.shape[-1])
    eye = np.eye(length, dtype=h.dtype)
    return r * (1.0 - eye) + eye


def domain_correlation(sequences) -> Tensor:
    """Average correlation matrix over one domain's sequences ``(count, L, d)``."""
    sequences = _t(sequences)
    if sequences.ndim != 3:
        raise ShapeError(f"domain_correlation expects (count, L, d), got {sequences.shape}")
    if sequences.shape[0] == 0:
        raise ContractError("domain_correlation: empty domain")
    return F.mean(pearson_matrix(sequences), axis=0)


def sequence_level_loss(correlations: Sequence, ordered: bool = False) -> Tensor:
    """Sum over domain pairs of the squared Frobenius distance between averaged correlations."""
    mats = [_t(r) for r in correlations]
    pairs, factor = _pairs(mats, "sequence_level_loss", ordered)
    total = None
    for i, j in pairs:
        if mats[i].shape != mats[j].shape:
            raise ShapeError(f"correlation shapes differ: {mats[i].shape} vs {mats[j].shape}")
        term = _sq_norm(mats[i] - mats[j])
        total = term if total is None else total + term
    return total * factor if factor != 1.0 else total


# ------------------------------------------------------------------ classification

def classification_loss(probs, labels) -> Tensor:
    """Per-sequence summed cross-entropy over epochs, averaged over the batch.

    ``probs``: (B, L, N) distributions; ``labels``: one-hot (B, L, N) or integer (B, L).
    """
    probs = _t(probs)
    if probs.ndim != 3:
        raise ShapeError(f"classification_loss expects (B, L, N) probabilities, got {probs.shape}")
    onehot = np.asarray(labels.data if isinstance(labels, Tensor) else labels)
    if onehot.shape == probs.shape[:2] and np.issubdtype(onehot.dtype, np.integer):
        if onehot.min() < 0 or onehot.max() >= probs.shape[2]:
            raise ContractError("label index out of range")
        onehot = np.eye(probs.shape[2], dtype=probs.dtype)[onehot]
    if onehot.shape != probs.shape:
        raise ShapeError(f"labels {onehot.shape} do not match predictions {probs.shape}")
    if not (np.all((onehot == 0) | (onehot == 1)) and np.all(onehot.sum(axis=-1) == 1)):
        raise ContractError("labels are not one-hot")
    nll = -F.sum(F.log(probs, eps=LOG_EPS) * onehot.astype(probs.dtype), axis=(1, 2))
    return F.mean(nll)


def total_loss(classify, rec=None, epoch=None, sequence=None, weights: LossWeights = LossWeights()) -> Tensor:
    """``classify + w.rec*rec + w.epoch*epoch + w.sequence*sequence``; absent terms count as zero."""
    terms = {"classify": classify, "rec": rec, "epoch": epoch, "sequence": sequence}
    for name, term in terms.items():
        if term is None:
            continue
        value = term.data if isinstance(term, Tensor) else np.asarray(term)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"loss term '{name}' is not finite ({value})")
    out = _t(classify)
    for name, w in (("rec", weights.rec), ("epoch", weights.epoch), ("sequence", weights.sequence)):
        term = terms[name]
        if term is not None and w != 0.0:
            out = out + _t(term) * w
    return out


# ------------------------------------------------------------------ baselines

def _sq_dists(a: Tensor, b: Tensor) -> Tensor:
    aa = F.sum(F.square(a), axis=1, keepdims=True)
    bb = F.sum(F.square(b), axis=1, keepdims=True)
    return aa + F.transpose(bb) - F.matmul(a, F.transpose(b)) * 2.0


def median_bandwidth(banks: Sequence) -> float:
    """Median of pairwise squared distances over the pooled banks (off-diagonal)."""
    pooled = np.concatenate([_t(b).data for b in banks], axis=0).astype(np.float64)
    sq = ((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(-1)
    off = sq[~np.eye(len(pooled), dtype=bool)]
    med = float(np.median(off)) if off.size else 0.0
    return med if med > 0 else 1.0


def mmd_loss(banks: Sequence, bandwidth=None, ordered: bool = False) -> Tensor:
    """Pairwise-summed biased squared MMD with a Gaussian kernel ``exp(-|x-y|^2 / bw)``.

    The bandwidth defaults to the median pairwise squared distance and is held
    constant with respect to gradients.
    """
    banks = [_bank(b) for b in banks]
    pairs, factor = _pairs(banks, "mmd_loss", ordered)
    bw = median_bandwidth(banks) if bandwidth is None else float(bandwidth)

    def k_mean(a, b):
        return F.mean(F.exp(_sq_dists(a, b) * (-1.0 / bw)))

    self_terms = [k_mean(b, b) for b in banks]
    total = None
    for i, j in pairs:
        term = self_terms[i] + self_terms[j] - k_mean(banks[i], banks[j]) * 2.0
        total = term if total is None else total + term
    return total * factor if factor != 1.0 else total


def coral_loss(banks: Sequence, ordered: bool = False) -> Tensor:
    """Second-order discrepancy scaled by 1/(4 d^2)."""
    d = _bank(banks[0]).shape[1]
    return epoch_second_order(banks, ordered) * (1.0 / (4.0 * d * d))


def check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise NonFiniteError(f"{name} is not finite ({value})")


def split_by_domain(features: Tensor, domains: np.ndarray, order: Sequence) -> list:
    """Gather the rows of a (B, ...) tensor belonging to each domain id in ``order``."""
    domains = np.asarray(domains)
    out = []
    for dom in order:
        idx = np.flatnonzero(domains == dom)
        if idx.size == 0:
            raise ContractError(f"domain {dom!r} has no sequences in this batch")
        out.append(F.getitem(features, idx))
    return out


def alignment_terms(features: Tensor, domains: np.ndarray, order: Sequence, need_epoch: bool = True,
                    need_sequence: bool = True) -> Mapping[str, Tensor]:
    """Epoch- and sequence-level losses for (B, L, d) features tagged per sequence."""
    per_domain = split_by_domain(features, domains, order)
    out = {}
    if need_epoch:
        banks = [F.reshape(h, (h.shape[0] * h.shape[1], h.shape[2])) for h in per_domain]
        out["epoch"] = epoch_level_loss(banks)
    if need_sequence:
        out["sequence"] = sequence_level_loss([domain_correlation(h) for h in per_domain])
    return out
