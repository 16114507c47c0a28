"""Time the compiled and pure-Python diamond kernels on the same march.

Usage: python3 benchmarks/bench_kernel.py [--n-u N] [--n-v N] [--l-max L] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ernwave.backend import available_backends
from ernwave.data import InitialData
from ernwave.evolution import NonlinearityConfig, RecordPlan, evolve
from ernwave.geometry import BackgroundERN
from ernwave.grid import EvolutionGrid, GridSpec
from ernwave.modes import build_angular_grid


def march(backend, n_u, n_v, l_max):
    grid = EvolutionGrid(GridSpec(0.0, 0.0, n_u, n_v, 0.2, True), build_angular_grid(l_max),
                         BackgroundERN(1.0))
    data = InitialData(0.05, 1.5, 1.0, (1.0,) + (0.5,) * l_max)
    t0 = time.perf_counter()
    fld = evolve(grid, data, NonlinearityConfig("constant", 1.0), RecordPlan(tail_rows=2),
                 backend)
    return time.perf_counter() - t0, fld.row(-1)[0]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-u", type=int, default=400)
    p.add_argument("--n-v", type=int, default=200)
    p.add_argument("--l-max", type=int, default=2)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    cells = a.n_u * a.n_v
    results = {}
    for name in available_backends():
        times = []
        for _ in range(a.repeat):
            dt, last = march(name, a.n_u, a.n_v, a.l_max)
            times.append(dt)
        results[name] = (min(times), last)
        print(f"{name:9s} best {min(times):8.3f} s  {cells / min(times):12.0f} cells/s")
    if len(results) == 2:
        (tc, lc), (tp, lp) = results["compiled"], results["python"]
        print(f"speedup   {tp / tc:8.1f}x")
        print(f"max |compiled - python| on the last row: {np.max(np.abs(lc - lp)):.3e}")


if __name__ == "__main__":
    main()
