"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

The numba path is selected exactly as in production (BAC_NO_NUMBA unset); the
numpy path is timed by setting the flag for the call.  The script also checks
that both paths agree on every benchmarked input.
"""

import argparse
import os
import time

import numpy as np

from bac import kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def with_backend(numba_on, fn):
    old = os.environ.get("BAC_NO_NUMBA")
    try:
        if numba_on:
            os.environ.pop("BAC_NO_NUMBA", None)
        else:
            os.environ["BAC_NO_NUMBA"] = "1"
        return fn()
    finally:
        if old is None:
            os.environ.pop("BAC_NO_NUMBA", None)
        else:
            os.environ["BAC_NO_NUMBA"] = old


def bench_dp(repeats):
    rng = np.random.default_rng(0)
    print("dp_fill (schedule DP table):")
    for K, m in [(100, 9), (500, 19), (2000, 29)]:
        prefix = np.concatenate([[0.0], np.cumsum(rng.uniform(-1, 1, K - 1))])
        if kernels.HAVE_NUMBA:
            with_backend(True, lambda: kernels.dp_fill(prefix, m))  # JIT warmup
            t_nb = with_backend(True, lambda: timeit(lambda: kernels.dp_fill(prefix, m), repeats))
        else:
            t_nb = float("nan")
        t_np = with_backend(False, lambda: timeit(lambda: kernels.dp_fill(prefix, m), repeats))
        dp_np, ptr_np = with_backend(False, lambda: kernels.dp_fill(prefix, m))
        if kernels.HAVE_NUMBA:
            dp_nb, ptr_nb = with_backend(True, lambda: kernels.dp_fill(prefix, m))
            assert np.array_equal(dp_np, dp_nb) and np.array_equal(ptr_np, ptr_nb)
        print(f"  K={K:5d} M={m:2d}  numpy {t_np * 1e3:8.3f} ms   numba {t_nb * 1e3:8.3f} ms")


def bench_l1(repeats):
    rng = np.random.default_rng(1)
    print("pairwise_l1_total (block feature spread):")
    for K, n in [(100, 512), (200, 1024), (400, 2048)]:
        feats = rng.normal(size=(K, n))
        if kernels.HAVE_NUMBA:
            with_backend(True, lambda: kernels.pairwise_l1_total(feats))
            t_nb = with_backend(True, lambda: timeit(lambda: kernels.pairwise_l1_total(feats), repeats))
        else:
            t_nb = float("nan")
        t_np = with_backend(False, lambda: timeit(lambda: kernels.pairwise_l1_total(feats), repeats))
        v_np = with_backend(False, lambda: kernels.pairwise_l1_total(feats))
        if kernels.HAVE_NUMBA:
            v_nb = with_backend(True, lambda: kernels.pairwise_l1_total(feats))
            assert abs(v_np - v_nb) <= 1e-9 * abs(v_np)
        print(f"  K={K:4d} N={n:5d}  numpy {t_np * 1e3:8.2f} ms   numba {t_nb * 1e3:8.2f} ms")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        print("numba not installed; timing the numpy fallback only")
    bench_dp(args.repeats)
    bench_l1(args.repeats)


if __name__ == "__main__":
    main()
