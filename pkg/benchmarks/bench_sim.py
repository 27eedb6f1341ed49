"""Compare the compiled closed-loop kernel with the vectorised numpy fallback.

Usage: python3 benchmarks/bench_sim.py [--horizon K] [--runs R] [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wncs_game import certifier, mgare, policy, scenarios, simkernel
from wncs_game.stochastic_model import build_pool


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=int, default=5000)
    ap.add_argument("--runs", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    pool = build_pool(scenarios.example1(0.8))
    cert = certifier.certify(pool)
    pool = pool.with_Ra(cert.Ra_chosen)
    sol = mgare.solve_fixed_point(pool)
    spec = policy.steady_policy(sol.P_star)

    backends = ["numpy"] + (["cython"] if simkernel.BACKEND == "cython" else [])
    results = {}
    for name in backends:
        best = float("inf")
        for _ in range(args.repeat):
            t = time.perf_counter()
            costs, _, _, _ = policy.run_closed_loop(spec, pool, args.horizon, args.runs, seed=1, backend=name)
            best = min(best, time.perf_counter() - t)
        results[name] = (best, costs)
        steps = args.horizon * args.runs
        print(f"{name:7s} best of {args.repeat}: {best:8.4f} s  ({steps / best / 1e6:6.2f} M steps/s)")
    if len(results) == 2:
        diff = np.nanmax(np.abs(results["numpy"][1] - results["cython"][1]))
        print(f"speed-up {results['numpy'][0] / results['cython'][0]:.1f}x, max |cost difference| {diff:.3g}")
    print(f"threads: {simkernel.thread_count()}")


if __name__ == "__main__":
    main()
