"""Acceptance suite: one test per numbered criterion.

Each test records a short detail string; the terminal summary prints one
PASS/FAIL line per criterion (see conftest.py).
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from geolorenz import cones, leaves, thermo
from geolorenz import lorenz_map as lm
from geolorenz import millefeuille as mfm
from geolorenz.thermo import Potential

ROOT = Path(__file__).resolve().parents[1]
P = lm.DEFAULT_PARAMS
SHIFT = 0.37


@pytest.fixture
def note(request):
    def _note(text):
        request.node.user_properties.append(("detail", text))
    return _note


def _word(back):
    return "".join(lm.side_of(v) for v in back[:, 0])


@pytest.mark.criterion(1, "cone field: jump gaps <= N(alpha), width decay")
def test_c01_cone_field(note):
    t0 = time.perf_counter()
    n_alpha = cones.N_alpha(P)
    assert cones.K_hat(P) == pytest.approx(5.0)
    bound = 1.05 / (2 * math.sqrt(2))
    max_gap, max_ratio = 0, 0.0
    for _, back, _ in cones.random_backward_orbits(100, 200, P, seed=0):
        rec = cones.hyperbolic_jump_sequence(back, P)
        max_gap = max(max_gap, max(rec.gaps))
        _, hist = cones.propagate_cone(back, 200, P, record=True)
        for a, b in zip(hist[5:-1], hist[6:]):
            if a.half_width > 0:
                max_ratio = max(max_ratio, b.half_width / a.half_width)
    dt = time.perf_counter() - t0
    note(f"max gap {max_gap} vs N={n_alpha}, max ratio {max_ratio:.4f} vs {bound:.4f}, {dt:.1f}s")
    assert max_gap <= n_alpha
    assert max_ratio <= bound
    assert dt < 10


@pytest.mark.criterion(2, "unstable-direction invariance at depth 30")
def test_c02_direction_invariance(note):
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    for p, back, _ in cones.random_backward_orbits(100, 31, P, seed=1):
        q = lm.F_apply(p, P)
        back_q = np.vstack([[p], back])
        dp = cones.unstable_direction(p, depth=30, params=P, backward=back[:30])
        dq = cones.unstable_direction(q, depth=30, params=P, backward=back_q[:30])
        pushed = cones.push_direction(p, dp.slope, P)
        # the pushed interval has half-width lip * dp.error
        lip = abs(lm.dg_dy(*p, params=P)) / lm.f_prime(p[0], P)
        gap = abs(dq.slope - pushed)
        allowed = dq.error + lip * dp.error + 1e-15
        worst = max(worst, gap / allowed)
        failures += gap > allowed
    dt = time.perf_counter() - t0
    note(f"failures {failures}/100, worst gap/width {worst:.3g}, {dt:.1f}s")
    assert failures == 0
    assert dt < 10


@pytest.mark.criterion(3, "graph transform: |leaf_n - leaf_n+1| <= 2^(1-n), n = 5..20")
def test_c03_graph_transform(note):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for p, back, _ in cones.random_backward_orbits(20, 40, P, seed=2):
        word = _word(back)
        prev = leaves.local_unstable_leaf(p, word, 5, P, backward=back)
        for n in range(5, 21):
            nxt = leaves.local_unstable_leaf(p, word, n + 1, P, backward=back)
            lo = max(prev.domain[0], nxt.domain[0])
            hi = min(prev.domain[1], nxt.domain[1])
            xs = np.linspace(lo, hi, 257)
            d = float(np.max(np.abs(prev.y_at(xs) - nxt.y_at(xs))))
            worst = max(worst, d / 2.0 ** (1 - n))
            count += 1
            prev = nxt
    dt = time.perf_counter() - t0
    note(f"{count} comparisons, worst distance/bound {worst:.3g}, {dt:.1f}s")
    assert worst <= 1.0
    assert dt < 30


@pytest.mark.criterion(4, "Markov property of every branch at N_max = 14")
def test_c04_markov(band_a, note):
    t0 = time.perf_counter()
    mf = mfm.build_millefeuille(band_a, N_max=14, markov_leaves=3)
    bad = [b.index for b in mf.branches if not b.markov_ok]
    order = np.argsort(mf.K_lo)
    disjoint = bool(np.all(mf.K_hi[order][:-1] <= mf.K_lo[order][1:]))
    end_err = 0.0
    for br in mf.branches:
        end_err = max(end_err, abs(br.forward(br.K_left, P) - band_a.P_l),
                      abs(br.forward(br.K_right, P) - band_a.P_r))
    dt = time.perf_counter() - t0
    note(f"{len(mf.branches) - len(bad)}/{len(mf.branches)} Markov, disjoint={disjoint}, "
         f"end error {end_err:.2g}, {dt:.1f}s")
    assert not bad
    assert disjoint
    assert end_err <= 1e-9
    assert dt < 60


@pytest.mark.criterion(5, "coboundary identity residual < 10 tol")
def test_c05_coboundary(mf14, note):
    t0 = time.perf_counter()
    tol = 1e-8
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in rng.choice(len(mf14.branches), 100, replace=False):
        br = mf14.branches[i]
        x = rng.uniform(br.K_left, br.K_right)
        y = float(np.clip(mf14.reference_y(x) + rng.uniform(-0.3, 0.3), -0.95, 0.95))
        worst = max(worst, thermo.coboundary_residual(x, y, br, mf14, thermo.TEST_POTENTIAL, tol))
    dt = time.perf_counter() - t0
    note(f"max residual {worst:.3g} on 100 points, {dt:.1f}s")
    assert worst < 10 * tol
    assert dt < 30


@pytest.mark.criterion(6, "zero-potential oracle")
def test_c06_zero_oracle(zero_table, zero_op, note):
    n, c = np.unique(zero_table.lengths, return_counts=True)
    lam_err, H_err = 0.0, 0.0
    for Z in np.linspace(0.6, 2.0, 20):
        sd = thermo.spectral_solve(Z, zero_op)
        closed = float(np.sum(c * np.exp(-n * Z)))
        lam_err = max(lam_err, abs(sd.lam - closed))
        H_err = max(H_err, float(np.max(np.abs(sd.H - 1.0))))
    oracle = brentq(lambda Z: np.sum(c * np.exp(-n * Z)) - 1.0, 0.01, 5.0, xtol=1e-15)
    rep = thermo.solve_pressure_root(zero_op, zero_table)
    root_err = abs(rep.pressure_root - oracle)
    note(f"lambda err {lam_err:.2g}, H err {H_err:.2g}, root err {root_err:.2g}")
    assert lam_err <= 1e-10
    assert H_err <= 1e-10
    assert root_err <= 1e-8


@pytest.mark.criterion(7, "log lambda decreasing/convex, derivative identity, duality")
def test_c07_thermo_identities(test_op, test_report, note):
    Zs = np.linspace(test_report.Z_c_estimate + 0.05, test_report.Z_c_estimate + 1.05, 20)
    ll = np.array([thermo.spectral_solve(Z, test_op).log_lambda for Z in Zs])
    d2 = float(np.min(np.diff(ll, 2)))
    # d log lambda / dZ = -1 / m_Z(M0), and m_Z(M0) = 1 / int tau dmu_Z
    h = 1e-4
    deriv_err, literal_err, duality_err = 0.0, 0.0, 0.0
    for Z in Zs[[3, 9, 15]]:
        fd = (thermo.spectral_solve(Z + h, test_op).log_lambda
              - thermo.spectral_solve(Z - h, test_op).log_lambda) / (2 * h)
        sd = thermo.spectral_solve(Z, test_op)
        kac = thermo.kac_integrals(Z, sd, test_op)
        deriv_err = max(deriv_err, abs(fd - (-1.0 / kac.m_Z_mass)))
        # the reciprocal reading -1 / int tau dmu_Z, reported but not asserted
        literal_err = max(literal_err, abs(fd - (-1.0 / kac.tau_mean)))
        duality_err = max(duality_err, abs(thermo.duality_pressure(Z, sd, kac) - Z))
    note(f"min second difference {d2:.2g}, derivative err {deriv_err:.2g} "
         f"(reciprocal form err {literal_err:.2g}), duality err {duality_err:.2g}")
    assert np.all(np.diff(ll) < 0)
    assert d2 >= -1e-6
    assert deriv_err <= 1e-4
    assert duality_err <= 1e-12


@pytest.mark.criterion(8, "distortion of L_Z^n(1) within e^C_A, n <= 5")
def test_c08_distortion(test_table, test_op, test_report, note):
    worst = 0.0
    for Z in (test_report.Z_c_estimate + 0.05, test_report.pressure_root, 1.5):
        for v in thermo.iterate_ones(Z, test_op, 5):
            worst = max(worst, float(v.max() / v.min()))
    bound = math.exp(test_table.C_A)
    note(f"max ratio {worst:.4f} vs e^C_A = {bound:.4f}")
    assert worst <= bound


@pytest.mark.criterion(9, "Z_c ordering and Bernoulli lower bounds")
def test_c09_zc_ordering(test_table, test_report, note):
    fe = test_report.free_energy
    C_A = test_table.C_A
    N = test_table.N_max
    slack = min(fe + C_A / n - thermo.bernoulli_lower_bound(n, test_table)
                for n in range(4, N + 1))
    note(f"Zc {test_report.Z_c_estimate:.5f} <= {fe + C_A / N:.5f}, "
         f"min Bernoulli slack {slack:.4f}")
    assert test_report.Z_c_estimate <= fe + C_A / N
    assert slack >= 0


@pytest.mark.criterion(10, "constant-shift covariance, c = 0.37")
def test_c10_shift(test_table, test_op, test_report, note):
    shifted = test_table.shifted(SHIFT)
    op_c = thermo.TransferOperator(shifted)
    lam_err = max(abs(thermo.spectral_solve(Z, op_c).lam
                      - thermo.spectral_solve(Z - SHIFT, test_op).lam)
                  for Z in np.linspace(1.0, 2.0, 11))
    rep = thermo.solve_pressure_root(op_c, shifted)
    zc_err = abs(rep.Z_c_estimate - test_report.Z_c_estimate - SHIFT)
    root_err = abs(rep.pressure_root - test_report.pressure_root - SHIFT)
    note(f"lambda err {lam_err:.2g}, Zc err {zc_err:.2g}, root err {root_err:.2g}")
    assert lam_err <= 1e-7
    assert zc_err <= 1e-7
    assert root_err <= 1e-7


@pytest.mark.criterion(11, "cross mille-feuilles agreement, gap shrinks 12 -> 16")
def test_c11_cross(band_a, band_b, note):
    out = []
    for A0, label in ((Potential.zero(), "zero"), (thermo.TEST_POTENTIAL, "test")):
        gaps = []
        for N in (12, 16):
            mfA = mfm.build_millefeuille(band_a, N_max=N)
            mfB = mfm.build_millefeuille(band_b, N_max=N)
            cr = thermo.cross_millefeuille_pressure(mfA, mfB, A0, grid_size=256)
            assert cr.agree, (label, N, cr.gap, cr.tolerance)
            gaps.append(cr.gap)
            out.append(f"{label} N={N} gap {cr.gap:.3g} tol {cr.tolerance:.3g}")
        assert gaps[1] < gaps[0], (label, gaps)
    note("; ".join(out))


def _cli_report(out, threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    r = subprocess.run([sys.executable, "-m", "geolorenz", "run", "--config",
                        str(ROOT / "configs" / "small.cfg"), "--out", str(out),
                        "--threads", str(threads)],
                       capture_output=True, text=True, env=env, timeout=600)
    assert r.returncode == 0, r.stderr
    return (out / "case_report.json").read_bytes()


@pytest.mark.criterion(12, "determinism across runs and thread counts")
def test_c12_determinism(tmp_path, note):
    a = _cli_report(tmp_path / "a", 1)
    b = _cli_report(tmp_path / "b", 1)
    c = _cli_report(tmp_path / "c", 2)
    note(f"report {len(a)} bytes; run/run equal {a == b}, 1/2 threads equal {a == c}")
    assert a == b
    assert a == c
