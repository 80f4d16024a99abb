"""Time the compiled and numpy cell kernels on the same grids.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--h 0.25 0.125]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from shellsym import _pykernels, kernels
from shellsym.grid import build_grid


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--R", type=float, default=10.0)
    ap.add_argument("--h", type=float, nargs="+", default=[0.25, 0.125])
    args = ap.parse_args()
    backends = [("python", _pykernels)]
    if kernels.compiled_available():
        backends.insert(0, ("compiled", kernels._compiled))
    print(f"{'h':>6} {'cells':>9} {'kernel':>7} " + " ".join(f"{n:>12}" for n, _ in backends) + "   speedup")
    for h in args.h:
        grid = build_grid(args.R, 2, h)
        ub = np.ascontiguousarray(grid.to_box(np.random.default_rng(0).random(grid.n_free)))
        s1, s2, s3 = grid.strides
        for label in ("energy", "mass"):
            row = []
            for _, mod in backends:
                g = np.zeros_like(ub)
                if label == "energy":
                    fn = lambda: mod.energy_grad(  # noqa: E731
                        ub, grid.cell_base, s1, s2, s3, grid.a11, grid.a12, grid.a22, grid.cell_weight, grid.h, 2.5, 1e-6, g, True
                    )
                else:
                    fn = lambda: mod.mass_grad(ub, grid.cell_base, s1, s2, s3, grid.cell_weight, 4.0, g, True)  # noqa: E731
                row.append(best_time(fn, args.repeat))
            speed = f"{row[-1] / row[0]:8.1f}x" if len(row) == 2 else "       -"
            print(f"{h:6.3f} {grid.n_cells:9d} {label:>7} " + " ".join(f"{t * 1e3:10.2f}ms" for t in row) + f"  {speed}")


if __name__ == "__main__":
    main()
