"""``seqdg`` command line: gen-data, train, loo, ablate, export-features, grad-check.

Exit status: 0 success, 1 contract error (bad config, bad data, failed check), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError

log = logging.getLogger("seqdg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _common(p: argparse.ArgumentParser, data: bool = True, out: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment config (default: the desk preset)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted path, e.g. model.d=32 or weights.epoch=0 (repeatable)")
    p.add_argument("--seed", type=int, action="append", dest="seeds",
                   help="training seed; repeat for several (overrides config 'seeds')")
    p.add_argument("--epochs", type=int, help="override config 'epochs'")
    p.add_argument("--arm", help="ablation arm: BASE, AE, EA, SA, AE+EA, AE+SA or FULL")
    if data:
        p.add_argument("--data", required=True, help="directory with domain_<k>.bin files from gen-data")
    if out:
        p.add_argument("--out", required=True, help="run directory (created; existing files are overwritten)")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write the five synthetic domain files")
    _common(p, data=False)
    p.add_argument("--shift", type=float, help="shift magnitude (overrides data.shift)")
    p.add_argument("--sequences", type=int, help="sequences per domain (overrides data.sequences)")
    p.add_argument("--data-seed", type=int, help="benchmark base seed (overrides data.seed)")

    p = sub.add_parser("train", help="train on the source domains of one fold, evaluate the held-out one")
    _common(p)
    p.add_argument("--held-out", type=int, help="held-out domain id (overrides config 'held_out')")

    p = sub.add_parser("loo", help="leave-one-domain-out over all domains")
    _common(p)

    p = sub.add_parser("ablate", help="leave-one-domain-out for several arms and seeds")
    _common(p)
    p.add_argument("--arms", nargs="+", help="arms to run (default: all seven)")
    p.add_argument("--folds", type=int, nargs="+", help="restrict to these held-out domain ids")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent jobs (default 1)")

    p = sub.add_parser("export-features", help="dump per-epoch features and their first principal component")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="model.ckpt written by 'train'")
    p.add_argument("--domains", type=int, nargs="+", help="domain ids to export (default: all)")

    p = sub.add_parser("grad-check", help="finite-difference check of every loss term and the full model")
    p.add_argument("--seeds", type=int, default=3, help="random instances per term (default 3)")
    p.add_argument("--tol", type=float, default=1e-4, help="pass threshold on relative error (default 1e-4)")
    return parser


def _resolve(args):
    from .experiment.config import load_config

    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ContractError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = _parse_value(value)
    if args.seeds:
        overrides["seeds"] = list(args.seeds)
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.arm is not None:
        overrides["arm"] = args.arm
    if getattr(args, "held_out", None) is not None:
        overrides["held_out"] = args.held_out
    if getattr(args, "shift", None) is not None:
        overrides["data.shift"] = args.shift
    if getattr(args, "sequences", None) is not None:
        overrides["data.sequences"] = args.sequences
    if getattr(args, "data_seed", None) is not None:
        overrides["data.seed"] = args.data_seed
    return load_config(args.config, overrides)


def _start_log(run_dir: str, verbose: bool) -> None:
    os.makedirs(run_dir, exist_ok=True)
    root = logging.getLogger("seqdg")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    fh = logging.FileHandler(os.path.join(run_dir, "run.log"), mode="w", encoding="utf-8")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root.addHandler(fh)
    if verbose:
        sh = logging.StreamHandler(sys.stderr)
        sh.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(sh)


def cmd_gen_data(args, cfg) -> int:
    from .synthetic import N_DOMAINS, make_benchmark, save_benchmark

    if cfg.data.domains != N_DOMAINS:
        raise ContractError(f"the benchmark has {N_DOMAINS} domains; data.domains={cfg.data.domains}")
    m = cfg.model
    datasets = make_benchmark(cfg.data.seed, cfg.data.shift, cfg.data.sequences, n=m.n, C=m.C, L=m.L)
    for path in save_benchmark(args.out, datasets):
        print(path)
    return 0


def _registry(args, cfg):
    from .experiment.protocol import DomainRegistry

    return DomainRegistry.from_directory(args.data, cfg.data.domains)


def cmd_train(args, cfg) -> int:
    from .autodiff import save_checkpoint
    from .experiment.outputs import write_fold
    from .experiment.protocol import run_fold

    fold = run_fold(cfg, _registry(args, cfg), cfg.held_out, cfg.seeds[0], keep_model=True)
    write_fold(args.out, fold)
    save_checkpoint(os.path.join(args.out, "model.ckpt"), fold.train.model.state_dict(), cfg.model.precision)
    r = fold.report
    print(f"held-out D{fold.held_out}: ACC {r.acc:.4f}  MF1 {r.mf1:.4f}  (epoch {r.selected_epoch})")
    return 0


def cmd_loo(args, cfg) -> int:
    from .experiment.outputs import loo_summary, write_fold, write_json
    from .experiment.protocol import leave_one_out

    result = leave_one_out(cfg, _registry(args, cfg))
    for fold in result["folds"]:
        write_fold(args.out, fold)
        print(f"D{fold.held_out}: ACC {fold.report.acc:.4f}  MF1 {fold.report.mf1:.4f}")
    write_json(os.path.join(args.out, "metrics.json"), loo_summary(result))
    print(f"avg: ACC {result['average']['acc']:.4f}  MF1 {result['average']['mf1']:.4f}")
    return 0


def cmd_ablate(args, cfg) -> int:
    from .experiment.config import ARMS
    from .experiment.outputs import write_ablation, write_json
    from .experiment.protocol import run_ablation

    if args.jobs < 1:
        raise ContractError("--jobs must be >= 1")
    result = run_ablation(cfg, _registry(args, cfg), arms=args.arms or ARMS, folds=args.folds, jobs=args.jobs)
    write_ablation(os.path.join(args.out, "ablation.csv"), result)
    write_json(os.path.join(args.out, "metrics.json"), {
        "arms": result["arms"], "seeds": result["seeds"], "folds": result["folds"], "summary": result["summary"]})
    for arm in result["arms"]:
        acc, mf1 = result["summary"][arm]["acc"], result["summary"][arm]["mf1"]
        print(f"{arm:6s} ACC {acc['mean']['avg']:.4f} ± {acc['std']['avg']:.4f}  "
              f"MF1 {mf1['mean']['avg']:.4f} ± {mf1['std']['avg']:.4f}")
    return 0


def cmd_export(args, cfg) -> int:
    from .autodiff import load_checkpoint
    from .experiment.export import export_features
    from .model import SeqModel

    reg = _registry(args, cfg)
    model = SeqModel(cfg.model, seed=cfg.seeds[0])
    model.load_state_dict(load_checkpoint(args.checkpoint))
    ids = args.domains if args.domains else reg.ids
    dump = export_features(model, [reg.get(k) for k in ids], cfg.eval_batch)
    dump.write_csv(os.path.join(args.out, "features.csv"))
    flag = "  (degenerate covariance: zero projection)" if dump.axis.degenerate else ""
    print(f"{len(dump.pc1)} epochs; leading eigenvalue {dump.axis.eigenvalue:.6g}{flag}")
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck_suite import run_suite

    worst = run_suite(seeds=range(args.seeds))
    ok = True
    for name, err in worst.items():
        status = "ok" if err < args.tol else "FAIL"
        ok &= err < args.tol
        print(f"{name:16s} {err:.3e}  {status}")
    return 0 if ok else 1


_COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "loo": cmd_loo, "ablate": cmd_ablate,
             "export-features": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "grad-check":
            return cmd_grad_check(args)
        cfg = _resolve(args)
        _start_log(args.out, args.verbose)
        from .experiment.outputs import write_config

        write_config(args.out, cfg)
        t0 = time.perf_counter()
        code = _COMMANDS[args.command](args, cfg)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
        return code
    except ContractError as exc:
        print(f"seqdg: error: {exc}", file=sys.stderr)
        return 1
    finally:
        for h in list(logging.getLogger("seqdg").handlers):
            h.close()
            logging.getLogger("seqdg").removeHandler(h)


if __name__ == "__main__":
    sys.exit(main())
