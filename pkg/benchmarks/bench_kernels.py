#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs each per-pixel kernel on VGA-sized (480x640) float32 maps, the
shape of the real datasets this tooling targets, plus the fused Adam
update on the default head's full parameter vector. The MLP matmuls are
not benchmarked here: both backends delegate those to BLAS via numpy.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from depthalign import _kernels_np

try:
    from depthalign import _ckernels
except ImportError:
    _ckernels = None

H, W = 480, 640


def make_inputs(seed=0):
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.0, 2.0, (H, W)).astype(np.float32)
    gt = rng.uniform(0.2, 8.0, (H, W)).astype(np.float32)
    pred = (gt * rng.uniform(0.6, 1.6, (H, W))).astype(np.float32)
    mask = rng.uniform(size=(H, W)) < 0.8
    n_params = 1_920_000  # roughly the default head's parameter count
    p = rng.standard_normal(n_params).astype(np.float32)
    g = rng.standard_normal(n_params).astype(np.float32)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    return y, gt, pred, mask, p, g, m, v


def bench(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def cases(impl, y, gt, pred, mask, p, g, m, v):
    return [
        ("apply_alignment", lambda: impl.apply_alignment(y, 1.7, 0.3)),
        ("masked_abs_sum", lambda: impl.masked_abs_sum(pred, gt, mask)),
        ("alignment_loss_grad",
         lambda: impl.alignment_loss_grad(y, gt, mask, 1.7, 0.3)),
        ("metric_sums", lambda: impl.metric_sums(pred, gt, mask)),
        ("adam_update",
         lambda: impl.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    inputs = make_inputs()
    print(f"maps {H}x{W} float32, adam over {inputs[4].size} parameters, "
          f"{args.repeats} repeats\n")
    print(f"{'kernel':<22}{'numpy':>12}{'compiled':>12}{'speedup':>10}")
    numpy_cases = cases(_kernels_np, *inputs)
    compiled_cases = cases(_ckernels, *inputs) if _ckernels else None
    for i, (name, np_fn) in enumerate(numpy_cases):
        t_np = bench(np_fn, args.repeats)
        if compiled_cases is None:
            print(f"{name:<22}{t_np * 1e3:>10.3f}ms{'n/a':>12}{'n/a':>10}")
            continue
        t_cy = bench(compiled_cases[i][1], args.repeats)
        print(f"{name:<22}{t_np * 1e3:>10.3f}ms{t_cy * 1e3:>10.3f}ms"
              f"{t_np / t_cy:>9.1f}x")
    if compiled_cases is None:
        print("\ncompiled extension not built; showing fallback only")


if __name__ == "__main__":
    main()
