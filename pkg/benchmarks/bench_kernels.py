"""Time the compiled kernels against their pure-Python fallback.

Both paths run the same source: the accelerated one through numba's njit,
the fallback via the function numba keeps on ``py_func``. Run with

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from flowtpp import kernels
from flowtpp.accel import NUMBA_ENABLED, python_impl


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_thinning():
    base = np.array([0.25, 0.25])
    excite = np.array([[0.3, 0.1], [0.1, 0.3]])
    rng = np.random.default_rng(0)
    n_events = 2000
    uniforms = rng.random(16 * n_events)

    def run(fn):
        out_dts = np.empty(n_events)
        out_marks = np.empty(n_events, dtype=np.int64)
        emitted, _ = fn(base, excite, 1.0, n_events, uniforms,
                        out_dts, out_marks)
        assert emitted == n_events
        return out_dts

    return run, kernels.hawkes_thinning, 20


def bench_otd():
    rng = np.random.default_rng(1)
    n = 200
    a_times = np.cumsum(rng.exponential(1.0, n))
    b_times = np.cumsum(rng.exponential(1.0, n))
    a_marks = rng.integers(0, 3, n)
    b_marks = rng.integers(0, 3, n)

    def run(fn):
        return fn(a_times, a_marks, b_times, b_marks, 1.0)

    return run, kernels.otd_align, 20


def main():
    if not NUMBA_ENABLED:
        print("acceleration is disabled (FLOWTPP_NUMBA=0 or numba missing); "
              "both columns would time the same code. Re-run without the flag.")
        return

    cases = {
        "hawkes_thinning (2000 events, M=2)": bench_thinning(),
        "otd_align (200 x 200 events)": bench_otd(),
    }
    header = f"{'kernel':<38} {'python':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, (run, kernel, repeats) in cases.items():
        fallback = python_impl(kernel)
        run(kernel)  # trigger compilation outside the timed region
        t_py = best_of(lambda: run(fallback), repeats)
        t_nb = best_of(lambda: run(kernel), repeats)
        print(f"{name:<38} {t_py * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_py / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
