"""Time the compiled kernels against the pure-Python fallback on identical inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each row reports the best wall time of ``repeat`` runs for both backends and
checks that they return the same answer.
"""
import argparse
import math
import time

import numpy as np
from scipy.spatial import cKDTree

from hyperlrt import _pykernels as py
from hyperlrt.core import build_wave_grid

try:
    from hyperlrt import _ckernels as cy
except ImportError:
    cy = None


def best_time(fn, repeat):
    out, best = None, math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    rng = np.random.default_rng(1)
    L = 35.0
    pts = rng.random((1225, 2)) * L
    grid = build_wave_grid(2, L, 0.75)
    yield "structure_sums (N=1225, n=28)", lambda k: k.structure_sums(pts, grid.indices, L), \
        lambda a, b: np.allclose(a, b, rtol=1e-10, atol=1e-9)

    kappa = build_wave_grid(2, 300.0, 0.75).kappas
    xs = rng.exponential(kappa, size=(200, kappa.size))
    yield "fit_profile_batch (200 x n=2012)", lambda k: k.fit_profile_batch(kappa, xs), \
        lambda a, b: np.allclose(a[2], b[2], rtol=1e-8, atol=1e-8)

    L = 50.0
    m = int(L) ** 2
    lattice = np.stack(np.meshgrid(np.arange(L), np.arange(L), indexing="ij"), -1).reshape(-1, 2)
    poisson = rng.random((rng.poisson(3 * m), 2)) * L
    dist, cand = cKDTree(poisson, boxsize=L).query(lattice, k=16)
    yield "gale_shapley (2500 sites, k=16)", lambda k: k.gale_shapley(cand, dist, len(poisson)), \
        lambda a, b: np.array_equal(a[0], b[0]) and a[1] == b[1]

    diameter = 2 * math.sqrt(0.547 * 35.0 ** 2 / (1225 * math.pi))

    def rsa(k):
        return k.rsa_fill(np.random.default_rng(7), 1225, diameter, 35.0, 2, 10_000 * 1225)
    yield "rsa_fill (1225 disks, phi=0.547)", rsa, \
        lambda a, b: np.array_equal(a[0], b[0]) and a[2] == b[2]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if cy is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    print(f"{'kernel':36s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}  agree")
    for name, run, same in cases():
        tc, oc = best_time(lambda: run(cy), args.repeat)
        tp, op = best_time(lambda: run(py), args.repeat)
        print(f"{name:36s} {tc:11.5f} {tp:11.5f} {tp / tc:9.1f}  {same(oc, op)}")


if __name__ == "__main__":
    main()
