"""Benchmark the hot kernels: numba JIT against the pure-numpy fallback.

Runs the stencil derivative and the connection-assembly kernel on a
representative lattice and reports timings for both backends.

Usage:
    python benchmarks/bench_kernels.py [--size 64] [--repeats 5]
"""

import argparse
import time

import numpy as np

from covcalc.kernels import fallback

try:
    from covcalc.kernels import fast
except ImportError:
    fast = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_diff_axis(size, repeats):
    rng = np.random.default_rng(0)
    arr = rng.normal(size=(size, size, size))
    rows = []
    for order in (2, 4):
        for axis in (0, 2):
            numpy_t = _time(lambda: fallback.diff_axis(arr, axis, 0.01, order,
                                                       False), repeats)
            row = {"kernel": f"diff_axis(order={order}, axis={axis})",
                   "numpy": numpy_t}
            if fast is not None:
                fast.diff_axis(arr, axis, 0.01, order, False)  # warm up
                row["numba"] = _time(
                    lambda: fast.diff_axis(arr, axis, 0.01, order, False),
                    repeats)
            rows.append(row)
    return rows


def bench_christoffel(size, repeats):
    rng = np.random.default_rng(1)
    n, d = size**2 * 8, 4
    base = rng.normal(size=(n, d, d))
    g = base @ np.swapaxes(base, 1, 2) + 4.0 * np.eye(d)
    ginv = np.linalg.inv(g)
    dg = rng.normal(size=(n, d, d, d))
    dg = 0.5 * (dg + dg.transpose(0, 2, 1, 3))
    row = {"kernel": f"christoffel_core(n={n}, d={d})",
           "numpy": _time(lambda: fallback.christoffel_core(ginv, dg), repeats)}
    if fast is not None:
        fast.christoffel_core(ginv, dg)  # warm up
        row["numba"] = _time(lambda: fast.christoffel_core(ginv, dg), repeats)
    return [row]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rows = bench_diff_axis(args.size, args.repeats)
    rows += bench_christoffel(args.size, args.repeats)

    width = max(len(r["kernel"]) for r in rows)
    header = f"{'kernel':<{width}}  {'numpy [ms]':>11}  {'numba [ms]':>11}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for r in rows:
        numpy_ms = r["numpy"] * 1e3
        if "numba" in r:
            numba_ms = r["numba"] * 1e3
            print(f"{r['kernel']:<{width}}  {numpy_ms:>11.3f}  "
                  f"{numba_ms:>11.3f}  {numpy_ms / numba_ms:>7.2f}x")
        else:
            print(f"{r['kernel']:<{width}}  {numpy_ms:>11.3f}  "
                  f"{'(no numba)':>11}  {'-':>8}")


if __name__ == "__main__":
    main()
