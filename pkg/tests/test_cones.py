import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolorenz import cones
from geolorenz import lorenz_map as lm
from geolorenz.errors import BivaluedPointError
from geolorenz.symbolic import periodic_orbit

P = lm.DEFAULT_PARAMS


@pytest.fixture(scope="module")
def period_two():
    """The period-2 orbit LR with its fibre coordinates (the map has no fixed point)."""
    xL, xR = periodic_orbit("LR").points
    y = 0.0
    for _ in range(200):
        y = lm.g_eval(xR, lm.g_eval(xL, y))
    pL = (xL, y)
    pR = lm.F_apply(pL)
    return pL, pR


def periodic_backward(p0, p1, n):
    # p0 = F(p1) = F^-1 ... alternate
    return np.array([p1 if k % 2 == 0 else p0 for k in range(n)])


def test_zero_depth_is_unstable_cone():
    c = cones.propagate_cone(np.zeros((0, 2)), 0)
    assert (c.slope_lo, c.slope_hi) == (-1 / P.alpha, 1 / P.alpha)


def test_constants():
    assert cones.K_hat() == pytest.approx(5.0)
    assert cones.N_alpha() == 6
    assert cones.cone_norm_constant() == pytest.approx(math.sqrt(1 + 1 / 0.81), abs=1e-15)
    assert round(cones.cone_norm_constant(), 4) == 1.4948
    with pytest.raises(ValueError):
        cones.N_alpha(P.with_(alpha=1.0, M=0.5))


def test_width_decay_on_random_orbits():
    for _, back, _ in cones.random_backward_orbits(30, 20, seed=3):
        _, hist = cones.propagate_cone(back, 20, record=True)
        w0 = hist[0].width
        for n in (5, 10, 20):
            assert hist[n].width <= w0 * cones.CONE_C_HAT * cones.TWO_SQRT2 ** (-n)


def test_periodic_cone_matches_matrix_power(period_two):
    pL, pR = period_two
    N = cones.N_alpha()
    back = periodic_backward(pL, pR, N)
    cone = cones.propagate_cone(back, N)
    # matrix oracle: DF along the orbit applied to the border vectors
    M = np.eye(2)
    for k in range(N - 1, -1, -1):
        M = lm.DF(back[k]) @ M
    slopes = sorted((M @ np.array([1.0, s]))[1] / (M @ np.array([1.0, s]))[0]
                    for s in (-1 / P.alpha, 1 / P.alpha))
    assert cone.slope_lo == pytest.approx(slopes[0], abs=1e-12)
    assert cone.slope_hi == pytest.approx(slopes[1], abs=1e-12)
    assert cone.inside(-1 / P.alpha, 1 / P.alpha)


def test_periodic_jump_has_gap_one(period_two):
    pL, pR = period_two
    assert cones.jump_condition(pL) > 1 and cones.jump_condition(pR) > 1
    rec = cones.hyperbolic_jump_sequence(periodic_backward(pL, pR, 12))
    assert rec.gaps == [1] * 12


def test_jump_gaps_bounded():
    for _, back, _ in cones.random_backward_orbits(20, 200, seed=5):
        rec = cones.hyperbolic_jump_sequence(back)
        assert all(1 <= g <= rec.N_alpha for g in rec.gaps)
        assert rec.jump_times == sorted(rec.jump_times)


def test_jump_sequence_needs_an_orbit():
    with pytest.raises(ValueError, match="shorter than one gap"):
        cones.hyperbolic_jump_sequence(np.zeros((0, 2)))


def test_critical_point_on_orbit():
    with pytest.raises(BivaluedPointError):
        cones.propagate_cone(np.array([[0.0, 0.1]]), 1)


def test_direction_depths_agree():
    for p, back, word in cones.random_backward_orbits(10, 30, seed=9):
        d10 = cones.unstable_direction(p, depth=10, backward=back)
        d20 = cones.unstable_direction(p, depth=20, backward=back)
        d30 = cones.unstable_direction(p, depth=30, backward=back)
        assert d20.error <= d10.error
        assert abs(d30.slope - d10.slope) <= d10.error + d30.error


def test_direction_invariance():
    for p, back, _ in cones.random_backward_orbits(30, 31, seed=11):
        # direction at p from depth 30, at F(p) from depth 31 (one more step)
        q = lm.F_apply(p)
        back_q = np.vstack([[p], back])
        dp = cones.unstable_direction(p, depth=30, backward=back)
        dq = cones.unstable_direction(q, depth=31, backward=back_q)
        pushed = cones.push_direction(p, dp.slope)
        lip = abs(lm.dg_dy(*p)) / lm.f_prime(p[0])
        assert abs(dq.slope - pushed) <= dq.error + lip * dp.error + 1e-15


def test_expansion_bound(rng):
    for _ in range(300):
        p = (rng.uniform(-1, 1), rng.uniform(-1, 1))
        v = rng.uniform(-1 / P.alpha, 1 / P.alpha)
        n = int(rng.integers(0, 26))
        try:
            rep = cones.expansion_check(p, (1.0, v), n)
        except BivaluedPointError:
            continue
        assert rep.ok
    with pytest.raises(ValueError):
        cones.expansion_check((0.5, 0.0), (0.1, 1.0), 3)


def test_lyapunov_period_two(period_two):
    pts = np.array(period_two)
    ly = cones.lyapunov_exponents(pts)
    expect_u = np.mean(np.log(lm.f_prime(pts[:, 0])))
    expect_s = np.mean(np.log(np.abs(lm.dg_dy(pts[:, 0], pts[:, 1]))))
    assert ly.lambda_u == pytest.approx(expect_u, abs=1e-15)
    assert ly.lambda_s == pytest.approx(expect_s, abs=1e-15)
    assert ly.lambda_s < 0 < ly.lambda_u


def test_lyapunov_matches_matrix_product():
    orb = lm.forward_orbit((0.31, 0.2), 2000)[500:]
    ly = cones.lyapunov_exponents(orb)
    assert ly.lambda_u >= math.log(math.sqrt(2))
    assert ly.lambda_u == pytest.approx(cones.log_derivative_product(orb), abs=1e-6)


def test_lyapunov_rejects_critical():
    with pytest.raises(BivaluedPointError):
        cones.lyapunov_exponents([[0.0, 0.1]])


def test_frozen_calibration_not_exceeded():
    cal = cones.calibrate_cone_constants(n_orbits=200, depth=30, seed=1)
    assert cal.C_hat <= cones.CONE_C_HAT + 1e-12
    assert cal.kappa_hat <= cones.KAPPA_HAT
    assert cal.max_ratio_after5 <= 1.05 / cones.TWO_SQRT2


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_cone_nesting_within_n_alpha(seed):
    for _, back, _ in cones.random_backward_orbits(1, 40, seed=seed):
        hits = [n for n in range(1, cones.N_alpha() + 1)
                if cones.propagate_cone(back[:n], n).inside(-1 / P.alpha, 1 / P.alpha)]
        assert hits
