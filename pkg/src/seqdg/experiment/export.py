"""Per-epoch feature dumps with a one-dimensional PCA projection."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..model import SeqModel
from ..synthetic import DomainDataset

PCA_TOL = 1e-9
PCA_MAX_ITER = 100_000


@dataclass
class PrincipalAxis:
    vector: np.ndarray      # unit loading vector, first nonzero entry positive
    eigenvalue: float
    iterations: int
    degenerate: bool        # True when the covariance is (numerically) zero


def leading_component(x: np.ndarray, tol: float = PCA_TOL, max_iter: int = PCA_MAX_ITER) -> PrincipalAxis:
    """Top eigenvector of the sample covariance of the rows of ``x`` by power iteration.

    The start vector is fixed (all ones plus a deterministic ramp) so the result
    depends only on ``x``.  Iteration stops when the vector moves less than ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    scale = float(np.abs(cov).max()) if cov.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return PrincipalAxis(np.zeros(d), 0.0, 0, True)
    v = np.ones(d) + np.linspace(0.0, 1.0, d)
    v /= np.linalg.norm(v)
    it = 0
    for it in range(1, max_iter + 1):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm <= scale * 1e-14:
            return PrincipalAxis(np.zeros(d), 0.0, it, True)
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return PrincipalAxis(v, float(v @ cov @ v), it, False)


def project(x: np.ndarray, axis: PrincipalAxis) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean(axis=0)) @ axis.vector


@dataclass
class FeatureDump:
    domains: np.ndarray
    stages: np.ndarray
    features: np.ndarray    # (epochs, d)
    pc1: np.ndarray
    axis: PrincipalAxis

    def write_csv(self, path) -> None:
        d = self.features.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["domain", "stage", "pc1"] + [f"f{j}" for j in range(d)])
            for dom, st, pc, row in zip(self.domains, self.stages, self.pc1, self.features):
                w.writerow([int(dom), int(st), repr(float(pc))] + [repr(float(v)) for v in row])


def export_features(model: SeqModel, datasets: Sequence[DomainDataset], batch: int = 64) -> FeatureDump:
    """Eval-mode sequence features for every epoch of every dataset, tagged by domain and stage."""
    was_training = model.training
    model.eval()
    feats, doms, stages = [], [], []
    try:
        for ds in datasets:
            for i in range(0, len(ds), batch):
                h = model.encode(ds.x[i:i + batch]).features.data
                feats.append(h.reshape(-1, h.shape[-1]).astype(np.float64))
            doms.append(np.full(ds.y.size, ds.domain_id, dtype=np.int64))
            stages.append(ds.y.reshape(-1).astype(np.int64))
    finally:
        model.train(was_training)
    x = np.concatenate(feats)
    axis = leading_component(x)
    return FeatureDump(np.concatenate(doms), np.concatenate(stages), x, project(x, axis), axis)
