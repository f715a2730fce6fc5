"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--grid 512] [--nmax 14] [--repeat 3]

Both implementations are called directly, so numba must be importable; the
first numba call (compilation or cache load) is excluded from the timings.
"""

import argparse
import time

import numpy as np

from geolorenz import _accel, kernels
from geolorenz import millefeuille as mfm
from geolorenz import symbolic, thermo


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--nmax", type=int, default=14)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is disabled (GEOLORENZ_NUMBA=0); nothing to compare")

    band = mfm.Band.from_seed(symbolic.delta_dense_periodic_orbit(0.2, max_period=12))
    mf = mfm.build_millefeuille(band, N_max=args.nmax)
    kargs = mf.params.kernel_args
    pot = thermo.TEST_POTENTIAL.coeffs
    grid = np.linspace(band.P_l, band.P_r, args.grid)
    J = thermo.omega_depth(thermo.TEST_POTENTIAL, thermo.DEFAULT_TOL)
    X, Y = kernels.forward_orbits(grid, mf.reference_y(grid), J, kargs)
    tidx = np.arange(args.grid, dtype=np.int64)[None, :]
    ind = (grid, X, Y, tidx, mf.syms, mf.lengths, mf.ref_back, mf.ref_y_start, *kargs, *pot)
    back = np.ascontiguousarray(mf.ref_back)
    leaf = (grid, back, mf.ref_y_start, *kargs, 1e-12)
    fwd = (grid, np.zeros_like(grid), 64, *kargs)

    cases = [
        ("leaf_values", kernels._leaf_values_nb, kernels._leaf_values_np, leaf),
        ("forward_orbits", kernels._forward_nb, kernels._forward_np, fwd),
        ("induced_table", kernels._induced_nb, kernels._induced_np, ind),
    ]
    print(f"branches={len(mf.branches)} grid={args.grid} omega_terms={J}")
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, nb, np_fn, a in cases:
        nb(*a)  # compile / load cache
        t_nb = best_of(lambda: nb(*a), args.repeat)
        t_np = best_of(lambda: np_fn(*a), args.repeat)
        print(f"{name:<16}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
