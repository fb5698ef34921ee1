"""Timing comparison of the stepping-kernel backends.

The fixed-step integrator reduces every simulation to the sequential
recursion x[k+1] = A x[k] + w[k]; this script times the compiled kernel
against the pure-NumPy fallback on representative problem sizes (the
shipped bench co-simulation is n=12, 60000 steps).

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from greybox._kernels import KERNEL_BACKEND
from greybox._kernels.fallback import affine_recursion as numpy_kernel

try:
    from greybox._kernels._recursion import affine_recursion as cython_kernel
except ImportError:
    cython_kernel = None

CASES = [
    (4, 30_000),    # plant-only RMSE evaluation
    (12, 60_000),   # bench co-simulation (plant + filter)
    (24, 60_000),   # larger augmented co-simulation
    (12, 600_000),  # refined-step convergence run
]

REPEATS = 5


def time_kernel(kernel, a, w, x0):
    best = float("inf")
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        out = kernel(a, w, x0)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    print(f"active backend at import: {KERNEL_BACKEND}")
    rng = np.random.default_rng(0)
    header = f"{'n':>4} {'steps':>8} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, steps in CASES:
        a = np.eye(n) + 1e-4 * rng.normal(size=(n, n))  # contraction-ish
        a *= 0.999
        w = 1e-3 * rng.normal(size=(steps, n))
        x0 = rng.normal(size=n)
        t_np, out_np = time_kernel(numpy_kernel, a, w, x0)
        if cython_kernel is None:
            print(f"{n:>4} {steps:>8} {t_np * 1e3:>12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_cy, out_cy = time_kernel(cython_kernel, a, w, x0)
        err = np.max(np.abs(out_np - out_cy))
        assert err <= 1e-10 * (1.0 + np.max(np.abs(out_np))), err
        print(f"{n:>4} {steps:>8} {t_np * 1e3:>12.2f} {t_cy * 1e3:>12.2f} "
              f"{t_np / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
