"""Accuracy, macro-F1 and confusion matrices over per-epoch stage predictions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ContractError, ShapeError


def confusion_matrix(y_true, y_pred, n_classes: int = 5) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true).reshape(-1).astype(np.int64)
    y_pred = np.asarray(y_pred).reshape(-1).astype(np.int64)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"{y_true.shape[0]} labels vs {y_pred.shape[0]} predictions")
    if y_true.size == 0:
        raise ContractError("cannot score an empty prediction set")
    for name, arr in (("label", y_true), ("prediction", y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ContractError(f"{name} outside [0, {n_classes})")
    return np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def f1_scores(cm: np.ndarray) -> np.ndarray:
    """Per-class F1 from a confusion matrix; 0 where a class never occurs in truth or prediction."""
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    return np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


@dataclass
class MetricsReport:
    acc: float
    mf1: float
    per_class_f1: list
    confusion: list
    count: int
    selected_epoch: Optional[int] = None
    val_history: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list, repr=False)

    def to_dict(self, with_trace: bool = False) -> dict:
        out = {
            "acc": self.acc,
            "mf1": self.mf1,
            "per_class_f1": list(self.per_class_f1),
            "confusion": [list(r) for r in self.confusion],
            "count": self.count,
            "selected_epoch": self.selected_epoch,
            "val_history": list(self.val_history),
        }
        if with_trace:
            out["loss_trace"] = list(self.loss_trace)
        return out


def score(y_true, y_pred, n_classes: int = 5) -> MetricsReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    total = int(cm.sum())
    f1 = f1_scores(cm)
    return MetricsReport(
        acc=float(np.trace(cm) / total),
        mf1=float(f1.mean()),
        per_class_f1=[float(v) for v in f1],
        confusion=cm.astype(int).tolist(),
        count=total,
    )
