#!/usr/bin/env python3
"""Benchmark the pair-window correlator: numba kernel vs numpy fallback.

Runs the same workload through both backends (the numpy path is imported
directly, so no environment juggling is needed), checks they agree
bin-for-bin, and prints throughput. The dead-time filter is timed as well.

Usage: python benchmarks/bench_correlator.py [--tags N] [--window-ns W]
"""

import argparse
import time

import numpy as np

from qfclab import _kernels


def timed(fn, *args, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tags", type=int, default=10_000_000)
    ap.add_argument("--window-ns", type=float, default=10.0)
    ap.add_argument("--bin-ps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    span_ps = int(args.tags * 1_000_000)  # ~1 MHz mean rate
    a = np.sort(rng.integers(0, span_ps, args.tags)).astype(np.int64)
    b = np.sort(rng.integers(0, span_ps, args.tags)).astype(np.int64)
    half = int(args.window_ns * 1e3 // args.bin_ps) * args.bin_ps
    print(f"{args.tags:.1e} tags/channel, window +-{half / 1e3:.1f} ns, "
          f"bin {args.bin_ps} ps")

    results = {}
    if _kernels.HAVE_NUMBA:
        _kernels.pair_histogram(a[:100], b[:100], -half, half, args.bin_ps)  # warm JIT
        h, dt = timed(_kernels.pair_histogram, a, b, np.int64(-half), np.int64(half),
                      np.int64(args.bin_ps), False)
        results["numba"] = (h, dt)
        print(f"numba : {dt:8.3f} s   ({args.tags / dt / 1e6:6.1f} Mtags/s)")
    else:
        print("numba : unavailable (or disabled via QFCLAB_DISABLE_NUMBA)")

    h, dt = timed(_kernels._pair_hist_py, a, b, np.int64(-half), np.int64(half),
                  np.int64(args.bin_ps), False)
    results["numpy"] = (h, dt)
    print(f"numpy : {dt:8.3f} s   ({args.tags / dt / 1e6:6.1f} Mtags/s)")

    if len(results) == 2:
        same = np.array_equal(results["numba"][0], results["numpy"][0])
        speedup = results["numpy"][1] / results["numba"][1]
        print(f"bin-for-bin identical: {same};  numba speedup: {speedup:.1f}x")
        if not same:
            raise SystemExit("backend mismatch!")

    # dead-time filter
    tags = np.sort(rng.integers(0, span_ps, args.tags // 10)).astype(np.int64)
    if _kernels.HAVE_NUMBA:
        _kernels.dead_time_mask(tags[:100], 50_000)
        _, dt_nb = timed(_kernels._dead_time_nb, tags, np.int64(50_000))
        print(f"dead-time numba : {dt_nb:8.3f} s")
    _, dt_py = timed(_kernels._dead_time_py, tags, np.int64(50_000), repeat=1)
    print(f"dead-time numpy : {dt_py:8.3f} s")


if __name__ == "__main__":
    main()
