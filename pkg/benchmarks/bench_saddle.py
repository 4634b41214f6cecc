"""Time the compiled and numpy saddle-point kernels on the same grid.

    python benchmarks/bench_saddle.py [--points 10000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from artifact import spectral
from artifact.gmm import DiffusionClock, MixtureSpec
from artifact.spectral import SpectralParams, default_grid, solve_grid


def bench(backend: str, params, lam, repeat: int) -> tuple[float, object]:
    best, sol = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        sol = solve_grid(params, lam, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, sol


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    spec = MixtureSpec((0.5, 0.5), (0.5, 0.25), np.zeros((2, 2)), 1)
    params = SpectralParams.from_spec(spec, DiffusionClock(0.01), 60, 30)
    lam = default_grid(args.points)
    backends = ["numpy"] + (["cython"] if spectral.BACKEND == "cython" else [])
    results = {b: bench(b, params, lam, args.repeat) for b in backends}
    for b, (sec, sol) in results.items():
        print(f"{b:>7}: {sec:8.3f} s  ({args.points / sec:,.0f} points/s, {len(sol.bulks)} bulks)")
    if "cython" in results:
        (tn, sn), (tc, sc) = results["numpy"], results["cython"]
        diff = np.max(np.abs(sn.g_psi - sc.g_psi) / np.maximum(1.0, np.abs(sn.g_psi)))
        print(f"speed-up {tn / tc:.2f}x, max relative difference in g_Psi {diff:.2e}")
    else:
        print("compiled kernel not available; only the numpy backend was timed")


if __name__ == "__main__":
    main()
