"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times the three hot kernels (betting capital maximum, WSR bisection, and
halt-time evaluation) on representative workloads and prints a table with
both paths and the speedup. The numba path is compiled once before timing
so JIT cost is excluded.

Usage: python benchmarks/benchmark_kernels.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from riskcal import _kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_capital_max(repeats):
    rng = np.random.default_rng(0)
    w = rng.uniform(size=5000)
    nu = np.full(5000, 0.8)
    args = (w, nu, 0.6, 10.0)
    return {
        "numpy": timeit(lambda: _kernels._capital_max_np(*args), repeats),
        "numba": timeit(lambda: _kernels._capital_max_nb(*args), repeats)
        if _kernels.USE_NUMBA
        else None,
    }


def bench_wsr_bisect(repeats):
    rng = np.random.default_rng(1)
    w = rng.uniform(size=2000)
    nu = np.full(2000, 0.7)
    args = (w, nu, 0.0, 1.0, 10.0, 1e-9, 200)
    return {
        "numpy": timeit(lambda: _kernels._wsr_bisect_np(*args), repeats),
        "numba": timeit(lambda: _kernels._wsr_bisect_nb(*args), repeats)
        if _kernels.USE_NUMBA
        else None,
    }


def bench_halt_times(repeats):
    rng = np.random.default_rng(2)
    conf = rng.uniform(size=(50000, 8))
    q = np.array([np.inf, np.inf, 0.7, 0.6, 0.5, 0.4, 0.3, 0.0])
    return {
        "numpy": timeit(lambda: _kernels._halt_times_np(conf, q), repeats),
        "numba": timeit(lambda: _kernels._halt_times_nb(conf, q), repeats)
        if _kernels.USE_NUMBA
        else None,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if not _kernels.USE_NUMBA:
        print("numba path disabled (RISKCAL_NO_NUMBA is set); timing numpy only")

    benches = {
        "capital_max (n=5000)": bench_capital_max,
        "wsr_bisect (n=2000)": bench_wsr_bisect,
        "halt_times (50000x8)": bench_halt_times,
    }
    print(f"{'kernel':<24} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, bench in benches.items():
        if _kernels.USE_NUMBA:
            # warm the JIT before timing
            bench(1)
        result = bench(args.repeats)
        np_t = result["numpy"]
        nb_t = result["numba"]
        if nb_t is None:
            print(f"{name:<24} {np_t * 1e6:>10.1f}us {'-':>12} {'-':>9}")
        else:
            print(
                f"{name:<24} {np_t * 1e6:>10.1f}us {nb_t * 1e6:>10.1f}us "
                f"{np_t / nb_t:>8.1f}x"
            )


if __name__ == "__main__":
    main()
