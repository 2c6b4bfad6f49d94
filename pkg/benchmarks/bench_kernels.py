#!/usr/bin/env python3
"""Benchmark: compiled solver kernels vs the pure-numpy fallback.

Times the batched Newton solve and the stationarity-system solves on
synthetic instances shaped like one training step (a window of daily
covariances), plus one full training call at simulation-study scale.

Run: python benchmarks/bench_kernels.py [--window 150] [--assets 7] [--reps 30]
"""

import argparse
import importlib
import time

import numpy as np


def make_instances(window, n, seed=0):
    rng = np.random.default_rng(seed)
    sigmas = np.empty((window, n, n))
    budgets = np.empty((window, n))
    for k in range(window):
        a = rng.standard_normal((n, 4 * n)) * 0.01
        sigmas[k] = a @ a.T / (4 * n) + 1e-6 * np.eye(n)
        b = rng.uniform(0.05, 1.0, n)
        budgets[k] = b / b.sum()
    scales = np.trace(sigmas, axis1=1, axis2=2) / n
    sigmas /= scales[:, None, None]
    diag = np.sqrt(sigmas[:, np.arange(n), np.arange(n)])
    y0 = 1.0 / (n * diag)
    return (np.ascontiguousarray(sigmas), np.ascontiguousarray(budgets),
            np.ascontiguousarray(y0))


def best_of(fn, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(window, n, reps):
    backends = {}
    for name, module in (("compiled", "rbnet._kernels._core"),
                         ("python", "rbnet._kernels.fallback")):
        try:
            backends[name] = importlib.import_module(module)
        except ImportError:
            print(f"  ({name} backend unavailable, skipping)")
    sigmas, budgets, y0 = make_instances(window, n)
    rhs = np.ascontiguousarray(np.random.default_rng(1).standard_normal((window, n, 1)))

    results = {}
    for name, mod in backends.items():
        Y, iters, resid = mod.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
        assert (iters >= 0).all()
        t_newton = best_of(lambda m=mod: m.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200), reps)
        t_kkt = best_of(lambda m=mod: m.kkt_solve_batch(sigmas, budgets, Y, rhs), reps)
        results[name] = (t_newton, t_kkt, Y)

    print(f"\nkernel timings, window={window}, assets={n} (best of {reps}):")
    print(f"  {'backend':<10} {'newton_solve_batch':>20} {'kkt_solve_batch':>18}")
    for name, (tn, tk, _) in results.items():
        print(f"  {name:<10} {tn * 1e3:>17.3f} ms {tk * 1e3:>15.3f} ms")
    if len(results) == 2:
        tn_c, tk_c, Yc = results["compiled"]
        tn_p, tk_p, Yp = results["python"]
        print(f"  {'speedup':<10} {tn_p / tn_c:>18.1f}x {tk_p / tk_c:>16.1f}x")
        print(f"  max |Y_compiled - Y_python| = {np.abs(Yc - Yp).max():.2e}")


def bench_training(window, n):
    """End-to-end: vectorized numpy work outside the kernels dilutes the
    kernel speedup, which is the honest comparison this reports."""
    import rbnet._kernels as kernels
    from rbnet import TrainConfig, train
    from rbnet._kernels import _core, fallback
    from rbnet.calibration import default_sim_spec
    from rbnet.data import simulate_returns

    spec = default_sim_spec(horizon=window + 40, seed=3)
    panel = simulate_returns(spec)
    cfg = TrainConfig(hidden=32, eta=10.0, steps=10, lookback=window,
                      retrain_every=5, mode="model_based", seed=0)

    print(f"\nfull training call ({cfg.steps} steps, {window}-day window, "
          f"{panel.n_assets} assets):")
    saved = (kernels.newton_solve_batch, kernels.kkt_solve_batch)
    try:
        for name, impl in (("compiled", _core), ("python", fallback)):
            kernels.newton_solve_batch = impl.newton_solve_batch
            kernels.kkt_solve_batch = impl.kkt_solve_batch
            t0 = time.perf_counter()
            train(panel, cfg)
            print(f"  {name:<10} {time.perf_counter() - t0:.3f} s")
    finally:
        kernels.newton_solve_batch, kernels.kkt_solve_batch = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--window", type=int, default=150)
    ap.add_argument("--assets", type=int, default=7)
    ap.add_argument("--reps", type=int, default=30)
    args = ap.parse_args()
    bench_kernels(args.window, args.assets, args.reps)
    try:
        bench_training(args.window, args.assets)
    except ImportError as exc:
        print(f"(training benchmark skipped: {exc})")


if __name__ == "__main__":
    main()
