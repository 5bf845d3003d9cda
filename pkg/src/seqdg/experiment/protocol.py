"""Leave-one-domain-out folds and the arm x seed x fold ablation grid."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..errors import ContractError
from ..synthetic import DomainDataset, domain_filename, load_domain
from .config import ARMS, ExperimentConfig
from .metrics import MetricsReport
from .training import TrainResult, evaluate, train


class DomainRegistry:
    """Domain id -> dataset, loaded lazily from disk on first access.

    Training only ever touches source ids; the held-out id is read once, after
    training and model selection are finished.
    """

    def __init__(self, sources: Mapping[int, Union[str, os.PathLike, DomainDataset]]):
        self._entries = dict(sources)
        self._cache: dict = {}

    @classmethod
    def from_directory(cls, directory, count: int = 5) -> "DomainRegistry":
        entries = {}
        for k in range(count):
            path = os.path.join(directory, domain_filename(k))
            if not os.path.exists(path):
                raise ContractError(f"missing domain file {path}")
            entries[k] = path
        return cls(entries)

    @classmethod
    def from_datasets(cls, datasets: Sequence[DomainDataset]) -> "DomainRegistry":
        ids = [d.domain_id for d in datasets]
        if len(set(ids)) != len(ids):
            raise ContractError(f"duplicate domain ids {ids}")
        return cls({d.domain_id: d for d in datasets})

    @property
    def ids(self) -> list:
        return sorted(self._entries)

    def get(self, domain_id: int) -> DomainDataset:
        if domain_id not in self._entries:
            raise ContractError(f"unknown domain id {domain_id}")
        entry = self._entries[domain_id]
        if isinstance(entry, DomainDataset):
            return entry
        if domain_id not in self._cache:
            ds = load_domain(entry)
            if ds.domain_id != domain_id:
                raise ContractError(f"{entry} holds domain {ds.domain_id}, registered as {domain_id}")
            self._cache[domain_id] = ds
        return self._cache[domain_id]


def _registry(domains) -> DomainRegistry:
    if isinstance(domains, DomainRegistry):
        return domains
    return DomainRegistry.from_datasets(list(domains))


@dataclass
class FoldResult:
    held_out: int
    sources: tuple
    seed: int
    report: MetricsReport
    train: Optional[TrainResult] = field(default=None, repr=False)


def run_fold(cfg: ExperimentConfig, domains, held_out: int, seed: int, keep_model: bool = False) -> FoldResult:
    reg = _registry(domains)
    source_ids = [k for k in reg.ids if k != held_out]
    cfg = cfg.replace(held_out=held_out)
    result = train(cfg, [reg.get(k) for k in source_ids], seed=seed)
    report = evaluate(result.model, reg.get(held_out), cfg.eval_batch)
    report.selected_epoch = result.selected_epoch
    report.val_history = result.val_history
    report.loss_trace = result.loss_trace
    return FoldResult(held_out, tuple(source_ids), seed, report, result if keep_model else None)


def average(reports: Sequence[MetricsReport]) -> dict:
    return {"acc": float(np.mean([r.acc for r in reports])), "mf1": float(np.mean([r.mf1 for r in reports]))}


def leave_one_out(cfg: ExperimentConfig, domains, seed: Optional[int] = None, keep_models: bool = False) -> dict:
    """Hold out each domain in turn; returns ``{"folds": [FoldResult], "average": {...}}``."""
    reg = _registry(domains)
    if len(reg.ids) != cfg.data.domains:
        raise ContractError(f"leave-one-out needs exactly {cfg.data.domains} domains, got {len(reg.ids)}")
    seed = cfg.seeds[0] if seed is None else seed
    folds = [run_fold(cfg, reg, k, seed, keep_models) for k in reg.ids]
    return {"seed": seed, "folds": folds, "average": average([f.report for f in folds])}


# ------------------------------------------------------------------ ablation

def _job(args):
    cfg_dict, arm, seed, fold, domains = args
    cfg = ExperimentConfig._build(cfg_dict).replace(arm=arm)
    res = run_fold(cfg, domains, fold, seed)
    return (arm, seed, fold), res.report.acc, res.report.mf1


def run_ablation(cfg: ExperimentConfig, domains, arms: Sequence[str] = ARMS, seeds: Optional[Sequence[int]] = None,
                 folds: Optional[Sequence[int]] = None, jobs: int = 1) -> dict:
    """Every (arm, seed, fold) job; results keyed and merged in sorted order.

    ``domains`` may be datasets or a :class:`DomainRegistry`; with ``jobs > 1``
    the jobs run in worker processes.
    """
    if not arms:
        raise ContractError("run_ablation needs at least one arm")
    for arm in arms:
        if arm not in ARMS:
            raise ContractError(f"unknown arm {arm!r}")
    reg = _registry(domains)
    seeds = list(cfg.seeds if seeds is None else seeds)
    folds = list(reg.ids if folds is None else folds)
    tasks = [(cfg.to_dict(), arm, s, k, reg) for arm in arms for s in seeds for k in folds]
    if jobs <= 1:
        results = [_job(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    runs = {key: {"acc": acc, "mf1": mf1} for key, acc, mf1 in sorted(results, key=lambda r: (ARMS.index(r[0][0]),) + r[0][1:])}
    return {"arms": list(arms), "seeds": seeds, "folds": folds, "runs": runs, "summary": summarize(runs, arms, seeds, folds)}


def summarize(runs: dict, arms, seeds, folds) -> dict:
    """Per arm: per-seed fold grids and their mean / sample std over seeds."""
    out = {}
    for arm in arms:
        entry = {}
        for metric in ("acc", "mf1"):
            grid = np.array([[runs[(arm, s, k)][metric] for k in folds] for s in seeds])   # seeds x folds
            avg = grid.mean(axis=1)
            std = lambda a: a.std(axis=0, ddof=1) if len(seeds) > 1 else np.zeros(a.shape[1:])
            entry[metric] = {
                "per_seed": {int(s): {"folds": [float(v) for v in row], "avg": float(a)}
                             for s, row, a in zip(seeds, grid, avg)},
                "mean": {"folds": [float(v) for v in grid.mean(axis=0)], "avg": float(avg.mean())},
                "std": {"folds": [float(v) for v in std(grid)], "avg": float(std(avg[:, None])[0])},
            }
        out[arm] = entry
    return out
