#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-NumPy kernels.

Runs the two hot paths (windowed forward simulation and the proposal-factor
rank-one update) under both backends and reports per-call times plus the
implied full-chain cost.  Usage: python benchmarks/compare_backends.py
"""

import time

import numpy as np

from co2therm import _kernels_py, load_benchmark
from co2therm.forward import WindowSimulator

try:
    from co2therm import _speedups
except ImportError:
    _speedups = None


def time_fn(fn, repeats, warmup=3):
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_simulation(kernel, repeats):
    import co2therm.forward as fwd

    setup = load_benchmark()
    dataset = setup.regenerate()
    theta = setup.prior_model.default_theta(dataset.co2[:, 0],
                                            dataset.temp[:, 0]).flat()
    original = fwd.simulate_coupled
    fwd.simulate_coupled = kernel
    try:
        sim = WindowSimulator(setup.network, setup.decomp, setup.layout,
                              setup.air, setup.thermal, dataset.times[:41],
                              10.0)
        return time_fn(lambda: sim.simulate_flat(theta), repeats)
    finally:
        fwd.simulate_coupled = original


def bench_chol(kernel, repeats):
    rng = np.random.default_rng(1)
    d = 72
    A = rng.normal(size=(d, d))
    L = np.linalg.cholesky(A @ A.T + d * np.eye(d))
    u = rng.normal(size=d)

    def once():
        kernel(L.copy(), u, 0.05)

    return time_fn(once, repeats)


def main():
    rows = []
    rows.append(("forward sim (40-sample window)", "python",
                 bench_simulation(_kernels_py.simulate_coupled, 30)))
    if _speedups is not None:
        rows.append(("forward sim (40-sample window)", "compiled",
                     bench_simulation(_speedups.simulate_coupled, 300)))
    rows.append(("chol rank-1 update (dim 72)", "python",
                 bench_chol(_kernels_py.chol_rank1_update, 300)))
    if _speedups is not None:
        rows.append(("chol rank-1 update (dim 72)", "compiled",
                     bench_chol(_speedups.chol_rank1_update, 2000)))

    print(f"{'kernel':38s} {'backend':9s} {'per call':>12s} {'20k-iter chain':>15s}")
    for name, backend, per in rows:
        chain = per * 20000
        print(f"{name:38s} {backend:9s} {per * 1e6:9.1f} us {chain:12.1f} s")
    if _speedups is None:
        print("\ncompiled extension not built; showing fallback only")
    else:
        py = rows[0][2]
        cy = rows[1][2]
        print(f"\nforward-sim speedup: {py / cy:.1f}x")


if __name__ == "__main__":
    main()
