"""Run-directory writers: config.json, metrics.json, losses.csv, ablation.csv."""
from __future__ import annotations

import csv
import json
import os

from .config import ExperimentConfig
from .training import LOSS_COLUMNS


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_config(run_dir, cfg: ExperimentConfig) -> str:
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
    return path


def write_losses(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOSS_COLUMNS)
        for row in trace:
            w.writerow([_fmt(row[c]) for c in LOSS_COLUMNS])


def read_losses(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_fold(run_dir, fold) -> None:
    """``fold_<k>/metrics.json`` and ``fold_<k>/losses.csv`` for one :class:`FoldResult`."""
    d = os.path.join(run_dir, f"fold_{fold.held_out}")
    os.makedirs(d, exist_ok=True)
    body = fold.report.to_dict()
    body.update(held_out=fold.held_out, sources=list(fold.sources), seed=fold.seed)
    write_json(os.path.join(d, "metrics.json"), body)
    write_losses(os.path.join(d, "losses.csv"), fold.report.loss_trace)


def loo_summary(result: dict) -> dict:
    return {
        "seed": result["seed"],
        "folds": [dict(f.report.to_dict(), held_out=f.held_out, sources=list(f.sources)) for f in result["folds"]],
        "average": result["average"],
    }


def write_ablation(path, result: dict) -> None:
    """Rows: arm, seed (an integer, ``mean`` or ``std``), metric, one column per held-out domain, avg."""
    folds = result["folds"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "seed", "metric"] + [f"D{k}" for k in folds] + ["avg"])
        for arm in result["arms"]:
            for metric in ("acc", "mf1"):
                entry = result["summary"][arm][metric]
                for seed, row in entry["per_seed"].items():
                    w.writerow([arm, seed, metric] + [_fmt(v) for v in row["folds"]] + [_fmt(row["avg"])])
                for stat in ("mean", "std"):
                    w.writerow([arm, stat, metric] + [_fmt(v) for v in entry[stat]["folds"]]
                               + [_fmt(entry[stat]["avg"])])
