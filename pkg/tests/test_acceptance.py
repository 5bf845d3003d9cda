"""The eight acceptance criteria, one test each, with one PASS/FAIL line per criterion.

The directional check (C4) trains the full arm x seed x fold grid and takes the
better part of an hour on a single core; everything else finishes in about a minute.
"""
import json
import os
import time

import numpy as np
import pytest

import oracles
from seqdg import losses as Lo
from seqdg import synthetic as S
from seqdg.autodiff import Tensor
from seqdg.autodiff import functional as F
from seqdg.cli import main
from seqdg.errors import ContractError
from seqdg.experiment.config import ExperimentConfig, preset
from seqdg.experiment.metrics import score
from seqdg.experiment.protocol import DomainRegistry, run_ablation, run_fold
from seqdg.experiment.training import train
from seqdg.gradcheck_suite import CHECKS, run_suite
from seqdg.model import SeqModel

SMALL_DATA = ["--set", "data.sequences=20"]


def test_c1_gradient_suite(acceptance_log):
    t0 = time.perf_counter()
    worst = run_suite(seeds=range(20))
    elapsed = time.perf_counter() - t0
    ok = set(worst) == set(CHECKS) and max(worst.values()) < 1e-4 and elapsed < 120
    name, err = max(worst.items(), key=lambda kv: kv[1])
    acceptance_log("C1 gradient suite", ok,
                   f"{len(worst)} checks x 20 seeds, worst {name} {err:.2e} (< 1e-4), {elapsed:.1f} s (< 120 s)")
    assert ok


def _instances(rng):
    domains = int(rng.integers(2, 5))
    d = int(rng.integers(2, 6))
    banks = [rng.standard_normal((int(rng.integers(2, 8)), d)) * rng.uniform(0.1, 5) for _ in range(domains)]
    length = int(rng.integers(2, 7))
    width = int(rng.integers(2, 7))
    seqs = [rng.standard_normal((int(rng.integers(1, 4)), length, width)) for _ in range(domains)]
    return banks, seqs


def test_c2_statistics_oracles(acceptance_log):
    rng = np.random.default_rng(20240601)
    worst = {k: 0.0 for k in ("mean", "covariance", "pearson", "first_order", "second_order", "sequence",
                              "cross_entropy", "acc_mf1")}
    confusion_ok = True
    instances = 120
    for _ in range(instances):
        banks, seqs = _instances(rng)
        lists = [b.tolist() for b in banks]
        for b, rows in zip(banks, lists):
            worst["mean"] = max(worst["mean"], np.abs(F.mean(Tensor(b), axis=0).data - oracles.mean_vec(rows)).max())
            worst["covariance"] = max(worst["covariance"],
                                      np.abs(Lo.covariance(Tensor(b)).data - oracles.covariance(rows)).max())
        worst["first_order"] = max(worst["first_order"], abs(Lo.epoch_first_order(banks).item()
                                                             - oracles.first_order(lists)))
        worst["second_order"] = max(worst["second_order"], abs(Lo.epoch_second_order(banks).item()
                                                               - oracles.second_order(lists)))
        for s in seqs:
            worst["pearson"] = max(worst["pearson"], np.abs(Lo.pearson_matrix(s[0]).data
                                                            - oracles.pearson_matrix(s[0].tolist())).max())
        rs = [Lo.domain_correlation(s) for s in seqs]
        worst["sequence"] = max(worst["sequence"], abs(Lo.sequence_level_loss(rs).item()
                                                       - oracles.sequence_loss([s.tolist() for s in seqs])))
        b, length = int(rng.integers(1, 5)), int(rng.integers(1, 9))
        probs = rng.dirichlet(np.ones(5) * rng.uniform(0.2, 3), size=(b, length))
        labels = rng.integers(0, 5, (b, length))
        worst["cross_entropy"] = max(worst["cross_entropy"], abs(Lo.classification_loss(probs, labels).item()
                                                                 - oracles.cross_entropy(probs.tolist(), labels.tolist())))
        n = int(rng.integers(1, 80))
        t, p = rng.integers(0, 5, n), rng.integers(0, 5, n)
        acc, mf1, cm = oracles.acc_mf1(t.tolist(), p.tolist())
        r = score(t, p)
        confusion_ok &= r.confusion == cm
        worst["acc_mf1"] = max(worst["acc_mf1"], abs(r.acc - acc), abs(r.mf1 - mf1))
    ok = confusion_ok and max(worst.values()) < 1e-10
    key = max(worst, key=worst.get)
    acceptance_log("C2 statistics oracles", ok,
                   f"{instances} instances x {len(worst)} statistics, worst {key} {worst[key]:.1e} (< 1e-10), "
                   f"confusion exact: {confusion_ok}")
    assert ok


def test_c3_zero_alignment_identity(acceptance_log):
    spec = S.benchmark_specs(0, 0.0)[0]
    clones = S.clone_domains(S.generate_domain(spec, 16))
    model = SeqModel(preset("desk").model, seed=0).eval()
    feats = [model.encode(c.x).features.data.astype(np.float64) for c in clones]
    epoch = Lo.epoch_level_loss([h.reshape(-1, h.shape[-1]) for h in feats]).item()
    seq = Lo.sequence_level_loss([Lo.domain_correlation(h) for h in feats]).item()
    raw = [c.x.reshape(c.x.shape[0] * c.x.shape[1], -1).astype(np.float64)[:, ::16] for c in clones]
    raw_epoch = Lo.epoch_level_loss(raw).item()
    ok = max(epoch, seq, raw_epoch) < 1e-9
    acceptance_log("C3 zero-alignment identity", ok,
                   f"epoch_level {epoch:.1e}, sequence_level {seq:.1e}, on signals {raw_epoch:.1e} (< 1e-9)")
    assert ok


C4_ARMS = ("BASE", "AE+EA", "AE+SA", "FULL")


@pytest.mark.slow
def test_c4_directional_dg_check(acceptance_log, tmp_path):
    cfg = preset("desk")
    assert (cfg.epochs, cfg.data.sequences, cfg.data.shift, cfg.model.d) == (30, 200, 1.0, 64)
    domains = S.make_benchmark(cfg.data.seed, cfg.data.shift, cfg.data.sequences)
    jobs = os.cpu_count() or 1
    t0 = time.perf_counter()
    grid = run_ablation(cfg, domains, arms=C4_ARMS, seeds=range(5), jobs=jobs)
    elapsed = time.perf_counter() - t0
    acc = {arm: grid["summary"][arm]["acc"]["mean"]["avg"] for arm in C4_ARMS}
    (tmp_path / "c4_grid.json").write_text(json.dumps(grid["summary"], indent=1))
    for arm in C4_ARMS:
        s = grid["summary"][arm]["acc"]
        print(f"  {arm:6s} " + " ".join(f"D{k} {v:.4f}" for k, v in enumerate(s["mean"]["folds"]))
              + f"  avg {s['mean']['avg']:.4f} ± {s['std']['avg']:.4f}")
    gain = acc["FULL"] - acc["BASE"]
    ordering = acc["FULL"] >= max(acc["AE+EA"], acc["AE+SA"]) >= acc["BASE"]
    fast = elapsed < 1800
    ok = gain >= 0.02 and ordering
    acceptance_log("C4 directional DG check", ok and (fast or jobs < 4),
                   f"FULL {acc['FULL']:.4f} vs BASE {acc['BASE']:.4f} (gain {100 * gain:+.2f} pts, need >= +2); "
                   f"AE+EA {acc['AE+EA']:.4f}, AE+SA {acc['AE+SA']:.4f}, ordering {'holds' if ordering else 'violated'}; "
                   f"{elapsed / 60:.1f} min on {jobs} core(s)")
    assert ok
    if jobs >= 4:
        assert fast


def _trace(cfg, sources, seed=0):
    r = train(cfg, sources, seed=seed)
    return r.loss_trace


def test_c5_ablation_decomposition(acceptance_log):
    cfg = preset("desk").replace(epochs=1, **{"data.sequences": 40})
    doms = S.make_benchmark(0, 1.0, sequences=40)[1:]
    checks = {
        "AE": ({"weights.epoch": 0.0, "weights.sequence": 0.0}, "rec"),
        "EA": ({"weights.rec": 0.0, "weights.sequence": 0.0}, "epoch_align"),
        "SA": ({"weights.rec": 0.0, "weights.epoch": 0.0}, "sequence"),
    }
    results = {}
    for arm, (zeroed, col) in checks.items():
        full = _trace(cfg.replace(arm="FULL", **zeroed), doms)
        single = _trace(cfg.replace(arm=arm), doms)
        keys = ("step", "classify", col, "total")
        results[arm] = len(full) > 0 and [tuple(r[k] for k in keys) for r in full] == \
            [tuple(r[k] for k in keys) for r in single]
    ok = all(results.values())
    acceptance_log("C5 ablation decomposition", ok,
                   ", ".join(f"FULL zeroed -> {a}: {'bit-exact' if v else 'MISMATCH'}" for a, v in results.items()))
    assert ok


def test_c6_loo_determinism(acceptance_log, tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), *SMALL_DATA]) == 0
    args = ["loo", "--data", str(data), "--epochs", "2", "--seed", "7", *SMALL_DATA]
    assert main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert main([*args, "--out", str(tmp_path / "r2")]) == 0
    a = (tmp_path / "r1" / "metrics.json").read_bytes()
    b = (tmp_path / "r2" / "metrics.json").read_bytes()
    folds_equal = all((tmp_path / "r1" / f"fold_{k}" / "losses.csv").read_bytes()
                      == (tmp_path / "r2" / f"fold_{k}" / "losses.csv").read_bytes() for k in range(5))
    ok = a == b and folds_equal
    acceptance_log("C6 determinism", ok, f"metrics.json {'byte-identical' if a == b else 'DIFFERS'} "
                   f"({len(a)} bytes); per-fold losses.csv identical: {folds_equal}")
    assert ok


def test_c7_held_out_isolation(acceptance_log, tmp_path):
    cfg = preset("desk").replace(epochs=2, **{"data.sequences": 20})
    S.save_benchmark(tmp_path, S.make_benchmark(1, 1.0, sequences=20))
    clean = run_fold(cfg, DomainRegistry.from_directory(tmp_path), held_out=3, seed=0, keep_model=True)

    # swap in a different, valid dataset under the held-out id
    target = tmp_path / S.domain_filename(3)
    S.save_domain(target, S.make_benchmark(99, 1.0, sequences=20)[3])
    swapped = run_fold(cfg, DomainRegistry.from_directory(tmp_path), held_out=3, seed=0, keep_model=True)
    same = (clean.train.loss_trace == swapped.train.loss_trace
            and clean.train.val_history == swapped.train.val_history
            and clean.train.selected_epoch == swapped.train.selected_epoch)
    weights_same = all(np.array_equal(a, swapped.train.model.state_dict()[k])
                       for k, a in clean.train.model.state_dict().items())
    moved = clean.report.confusion != swapped.report.confusion

    # garbage under the held-out id only fails at the final evaluation
    target.write_bytes(os.urandom(4096))
    with pytest.raises(ContractError):
        run_fold(cfg, DomainRegistry.from_directory(tmp_path), held_out=3, seed=0)
    sources_only = train(cfg.replace(held_out=3), [DomainRegistry.from_directory(tmp_path).get(k) for k in (0, 1, 2, 4)],
                         seed=0)
    garbage_same = sources_only.loss_trace == clean.train.loss_trace
    ok = same and weights_same and moved and garbage_same
    acceptance_log("C7 held-out isolation", ok,
                   f"held-out file replaced: loss trace ({len(clean.train.loss_trace)} steps), validation history, "
                   f"selected epoch and weights {'unchanged' if same and weights_same else 'CHANGED'}, "
                   f"test confusion {'changed' if moved else 'unchanged'}; garbage file: training unchanged "
                   f"{garbage_same}, evaluation raises")
    assert ok


def test_c8_paper_preset_fidelity(acceptance_log, tmp_path):
    conf = tmp_path / "paper.json"
    conf.write_text(json.dumps({"preset": "paper"}))
    out = tmp_path / "run"
    assert main(["gen-data", "--config", str(conf), "--sequences", "1", "--out", str(out)]) == 0
    echoed = json.loads((out / "config.json").read_text())
    got = {
        "L": echoed["model"]["L"], "d": echoed["model"]["d"], "lr": echoed["lr"],
        "weight_decay": echoed["weight_decay"], "batch_size": echoed["batch_size"],
        "dropout": echoed["model"]["dropout"], "epochs": echoed["epochs"],
        "lambdas": [echoed["weights"]["rec"], echoed["weights"]["epoch"], echoed["weights"]["sequence"]],
    }
    want = {"L": 20, "d": 512, "lr": 1e-3, "weight_decay": 1e-4, "batch_size": 32, "dropout": 0.1,
            "epochs": 50, "lambdas": [0.5, 0.5, 0.5]}
    ok = got == want and ExperimentConfig.from_dict(echoed).to_dict() == echoed
    acceptance_log("C8 paper-scale preset", ok, ", ".join(f"{k}={v}" for k, v in got.items()))
    assert ok
