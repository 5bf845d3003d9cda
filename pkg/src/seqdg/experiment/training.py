"""Training on balanced source-domain batches with source-validation model selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import losses as Lo
from ..autodiff import Adam, backward
from ..errors import ContractError, NonFiniteError
from ..model import SeqModel
from ..synthetic import DomainDataset, split_domain
from .config import ExperimentConfig
from .metrics import MetricsReport, score

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "epoch", "classify", "rec", "epoch_align", "sequence", "total")


@dataclass
class TrainResult:
    model: SeqModel
    selected_epoch: int
    val_history: list
    loss_trace: list = field(repr=False)
    source_ids: tuple = ()


def epoch_alignment_loss(features, domains, order, cfg: ExperimentConfig):
    per_domain = Lo.split_by_domain(features, domains, order)
    banks = [h.reshape((h.shape[0] * h.shape[1], h.shape[2])) for h in per_domain]
    if cfg.epoch_alignment == "mmd":
        return Lo.mmd_loss(banks, ordered=cfg.ordered_pairs)
    if cfg.epoch_alignment == "coral":
        return Lo.coral_loss(banks, ordered=cfg.ordered_pairs)
    return Lo.epoch_level_loss(banks, ordered=cfg.ordered_pairs)


def sequence_alignment_loss(features, domains, order, cfg: ExperimentConfig):
    per_domain = Lo.split_by_domain(features, domains, order)
    return Lo.sequence_level_loss([Lo.domain_correlation(h) for h in per_domain], ordered=cfg.ordered_pairs)


def arm_loss(model: SeqModel, cfg: ExperimentConfig, x, y, domains, order):
    """Total loss for the configured arm plus the value of every computed term."""
    terms = cfg.terms
    feats = model.encode(x, domains)
    parts = {"classify": Lo.classification_loss(model.classify(feats), y)}
    if "rec" in terms:
        parts["rec"] = Lo.reconstruction_loss(x, model.decode(feats))
    if "epoch" in terms:
        parts["epoch"] = epoch_alignment_loss(feats.features, domains, order, cfg)
    if "sequence" in terms:
        parts["sequence"] = sequence_alignment_loss(feats.features, domains, order, cfg)
    total = Lo.total_loss(parts["classify"], parts.get("rec"), parts.get("epoch"), parts.get("sequence"),
                          cfg.weights)
    return total, parts


def balanced_batches(sizes: Sequence[int], per_domain: int, rng: np.random.Generator):
    """One pass of index blocks: every batch takes ``per_domain`` fresh rows from each domain.

    The pass ends when the smallest domain runs out; leftovers are dropped.
    """
    if min(sizes) < per_domain:
        raise ContractError(f"a source domain has {min(sizes)} training sequences; a batch needs {per_domain}")
    perms = [rng.permutation(n) for n in sizes]
    for b in range(min(sizes) // per_domain):
        yield [p[b * per_domain:(b + 1) * per_domain] for p in perms]


def predict_dataset(model: SeqModel, x: np.ndarray, batch: int) -> np.ndarray:
    return model.predict(x, batch_size=batch)


def evaluate(model: SeqModel, dataset, batch: int = 64) -> MetricsReport:
    """Eval-mode per-epoch predictions scored against the labels (``dataset`` or ``(x, y)``)."""
    x, y = (dataset.x, dataset.y) if isinstance(dataset, DomainDataset) else dataset
    if len(x) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    return score(y, predict_dataset(model, x, batch), model.cfg.N)


def _pooled(sets: Sequence[DomainDataset]):
    return np.concatenate([s.x for s in sets]), np.concatenate([s.y for s in sets])


def train(cfg: ExperimentConfig, sources: Sequence[DomainDataset], seed: Optional[int] = None,
          on_epoch: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Fit one model on the source domains; returns the parameters of the best validation epoch."""
    seed = cfg.seeds[0] if seed is None else int(seed)
    ids = [s.domain_id for s in sources]
    if len(sources) != cfg.sources:
        raise ContractError(f"expected {cfg.sources} source domains, got {len(sources)}")
    if len(set(ids)) != len(ids):
        raise ContractError(f"duplicate source domain ids {ids}")
    if cfg.held_out in ids:
        raise ContractError(f"held-out domain {cfg.held_out} is among the sources {ids}")

    splits = [split_domain(s, cfg.train_fraction, cfg.split_seed) for s in sources]
    train_sets = [tr for tr, _ in splits]
    val_x, val_y = _pooled([va for _, va in splits])

    model = SeqModel(cfg.model, seed=seed)
    opt = Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps,
               weight_decay=cfg.weight_decay, decoupled=cfg.decoupled_weight_decay)
    batch_rng = np.random.default_rng([seed, 2])
    per = cfg.per_domain
    tags = np.repeat(np.asarray(ids), per)
    dtype = cfg.model.dtype

    trace, history = [], []
    best_acc, best_epoch, best_state = -1.0, -1, None
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        for blocks in balanced_batches([len(t) for t in train_sets], per, batch_rng):
            x = np.concatenate([t.x[b] for t, b in zip(train_sets, blocks)]).astype(dtype, copy=False)
            y = np.concatenate([t.y[b] for t, b in zip(train_sets, blocks)]).astype(np.int64)
            try:
                total, parts = arm_loss(model, cfg, x, y, tags, ids)
            except NonFiniteError as exc:
                raise NonFiniteError(f"step {step} (epoch {epoch}, arm {cfg.arm}, seed {seed}): {exc}") from None
            grads = backward(total, opt.params)
            opt.step(grads)
            trace.append({
                "step": step,
                "epoch": epoch,
                "classify": float(parts["classify"].item()),
                "rec": float(parts["rec"].item()) if "rec" in parts else None,
                "epoch_align": float(parts["epoch"].item()) if "epoch" in parts else None,
                "sequence": float(parts["sequence"].item()) if "sequence" in parts else None,
                "total": float(total.item()),
            })
            step += 1
        model.eval()
        acc = evaluate(model, (val_x, val_y), cfg.eval_batch).acc
        history.append(acc)
        if acc > best_acc:      # strict: ties keep the earlier epoch
            best_acc, best_epoch, best_state = acc, epoch, model.state_dict()
        log.debug("arm=%s seed=%d epoch=%d val_acc=%.4f", cfg.arm, seed, epoch, acc)
        if on_epoch is not None:
            on_epoch(epoch, acc)

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, best_epoch, history, trace, tuple(ids))
