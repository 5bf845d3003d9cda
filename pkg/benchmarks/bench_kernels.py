"""Time the compiled kernels against the numpy fallback on desk-model shapes.

    python benchmarks/bench_kernels.py [--repeat 20] [--train-steps 5]

Prints one row per kernel with the median wall time of each backend, their
ratio, and the largest difference between the two outputs relative to the
largest output magnitude (float32 reductions differ in summation order).  With
``--train-steps`` it also times full FULL-arm training steps end to end.
"""
import argparse
import statistics
import time

import numpy as np

from seqdg.autodiff import kernels


def _median_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _cases(rng):
    # conv input of the first encoder block: (B*L, n, C) with B=32, L=8
    x = rng.standard_normal((256, 256, 2)).astype(np.float32)
    mid = rng.standard_normal((256, 128, 4)).astype(np.float32)
    cols = rng.standard_normal((256, 128, 5, 8)).astype(np.float32)
    ln_x = rng.standard_normal((256, 128, 16)).astype(np.float32)
    gamma = rng.uniform(0.5, 1.5, 16).astype(np.float32)
    beta = rng.standard_normal(16).astype(np.float32)
    g = rng.standard_normal(ln_x.shape).astype(np.float32)

    def ln_backward(k):
        _, xhat, rstd = k.layer_norm_forward(ln_x, gamma, beta, 1e-5)
        return k.layer_norm_backward(xhat, rstd, gamma, g)

    return {
        "im2col k7 (256x256x2)": lambda k: k.im2col(x, 7, 1, 256, 3),
        "im2col k5 (256x128x4)": lambda k: k.im2col(mid, 5, 1, 128, 2),
        "col2im k5 (256x128x8)": lambda k: k.col2im(cols, 128, 1, 2),
        "layer_norm fwd (256x128x16)": lambda k: k.layer_norm_forward(ln_x, gamma, beta, 1e-5),
        "layer_norm fwd+bwd": ln_backward,
    }


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-30))


def bench_kernels(repeat):
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':30s} " + " ".join(f"{b:>11s}" for b in backends) + "    speedup    rel diff")
    for name, case in _cases(rng).items():
        row, outs = [], {}
        for b in backends:
            kernels.use_backend(b)
            row.append(_median_time(lambda: case(kernels.active), repeat))
            outs[b] = case(kernels.active)
        speed = row[0] / row[-1] if len(row) > 1 else float("nan")
        diff = _max_diff(outs["numpy"], outs[backends[-1]])
        print(f"{name:30s} " + " ".join(f"{t * 1e3:9.3f}ms" for t in row) + f"   {speed:7.2f}x   {diff:.2e}")


def bench_training(steps):
    from seqdg import synthetic as S
    from seqdg.experiment.config import ExperimentConfig
    from seqdg.experiment.training import arm_loss
    from seqdg.autodiff import Adam, backward
    from seqdg.model import SeqModel

    cfg = ExperimentConfig(arm="FULL")
    doms = S.make_benchmark(0, 1.0, sequences=8)[:4]
    x = np.concatenate([d.x for d in doms])
    y = np.concatenate([d.y for d in doms]).astype(np.int64)
    tags = np.repeat(np.arange(4), 8)
    for b in kernels.available_backends():
        kernels.use_backend(b)
        model = SeqModel(cfg.model, seed=0)
        opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

        def step():
            total, _ = arm_loss(model, cfg, x, y, tags, [0, 1, 2, 3])
            opt.step(backward(total, opt.params))

        print(f"FULL training step, {b:8s}: {_median_time(step, steps) * 1e3:8.1f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20, help="timed repetitions per kernel (median reported)")
    ap.add_argument("--train-steps", type=int, default=0, help="also time this many full training steps")
    args = ap.parse_args(argv)
    default = kernels.backend()
    try:
        bench_kernels(args.repeat)
        if args.train_steps:
            bench_training(args.train_steps)
    finally:
        kernels.use_backend(default)


if __name__ == "__main__":
    main()
