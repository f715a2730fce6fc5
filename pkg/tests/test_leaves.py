import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolorenz import cones, kernels, leaves, symbolic
from geolorenz import lorenz_map as lm
from geolorenz.errors import NoLeafError

P = lm.DEFAULT_PARAMS


def corpus(n, depth, seed):
    for p, back, _ in cones.random_backward_orbits(n, depth, seed=seed):
        yield p, back, "".join(lm.side_of(v) for v in back[:, 0])


def _admissible(x, eps, word):
    lo, hi = x - eps, x + eps
    if lo < -1 or hi > 1:
        return False
    for s in word:
        r0, r1 = lm.branch_range(s)
        ok = (r0 <= lo and hi < r1) if s == "L" else (r0 < lo and hi <= r1)
        if not ok:
            return False
        lo, hi = lm.inverse_branch_bisect(s, lo), lm.inverse_branch_bisect(s, hi)
    return True


def eta_half_oracle(x, word):
    """Largest eps whose pulled-back intervals stay in the branch ranges (bisection)."""
    a, b = 0.0, 1.0
    for _ in range(48):
        m = 0.5 * (a + b)
        a, b = (m, b) if _admissible(x, m, word) else (a, m)
    return a


@pytest.fixture(scope="module")
def period_two_point():
    xL, xR = symbolic.periodic_orbit("LR").points
    y = 0.0
    for _ in range(200):
        y = lm.g_eval(xR, lm.g_eval(xL, y))
    pL = (xL, y)
    return pL, lm.F_apply(pL)


def periodic_back(pL, pR, n):
    return np.array([pR if k % 2 == 0 else pL for k in range(n)])


def test_eta_matches_bisection_oracle():
    for p, back, word in corpus(4, 30, seed=2):
        rep = leaves.past_stabilization_test(p, word, 30, backward=back)
        assert rep.stabilized
        assert rep.eta / 2 == pytest.approx(eta_half_oracle(p[0], word), abs=1e-13)
        assert list(rep.first_cut_depths) == sorted(set(rep.first_cut_depths))


def test_postcritical_minimum_is_lower_bound():
    tab = symbolic.postcritical_table()
    for p, back, word in corpus(12, 30, seed=4):
        rep = leaves.past_stabilization_test(p, word, 30, backward=back)
        pcs = np.concatenate([tab.left[:31], tab.right[:31]])
        assert np.min(np.abs(pcs - p[0])) <= rep.eta / 2 + 1e-15
        # every cut is a post-critical point
        for c in rep.cut_points:
            assert tab.match(c, 1e-12) is not None


def test_depth_zero():
    rep = leaves.past_stabilization_test((0.3, 0.1), "", 0)
    assert rep.stabilized and rep.eta / 2 == pytest.approx(0.7)


def test_periodic_point_stabilizes(period_two_point):
    pL, pR = period_two_point
    back = periodic_back(pL, pR, 40)
    rep = leaves.past_stabilization_test(pL, "RL" * 20, 40, backward=back)
    assert rep.stabilized
    assert rep.delta == pytest.approx(abs(pL[0]))
    assert rep.eta / 2 == pytest.approx(eta_half_oracle(pL[0], "RL" * 20), abs=1e-12)


def test_bsr_examples(period_two_point):
    pL, pR = period_two_point
    back = periodic_back(pL, pR, 20)
    d = abs(pL[0])
    assert leaves.bsr_diagnostic(pL, "RL" * 10, delta=0.1, backward=back) == 0.0
    assert leaves.bsr_diagnostic(pL, "RL" * 10, delta=0.5, backward=back) == \
        pytest.approx(abs(math.log(d / 0.5)))
    with pytest.raises(ValueError):
        leaves.bsr_diagnostic(pL, "RL", delta=0.0)


def test_bsr_monotone_in_delta():
    # with ||z||_delta = min(1, |z|/delta) each term grows with delta
    for p, back, word in corpus(10, 40, seed=6):
        vals = [leaves.bsr_diagnostic(p, word, d, backward=back) for d in np.linspace(0.01, 0.5, 12)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_leaf_depth_contraction():
    for p, back, word in corpus(8, 40, seed=8):
        n = 12
        a = leaves.local_unstable_leaf(p, word, n, backward=back)
        b = leaves.local_unstable_leaf(p, word, n + 5, backward=back)
        lo = max(a.domain[0], b.domain[0])
        hi = min(a.domain[1], b.domain[1])
        xs = np.linspace(lo, hi, 200)
        assert np.max(np.abs(a.y_at(xs) - b.y_at(xs))) <= 2.0 ** (1 - n)


def test_leaf_invariants():
    for p, back, word in corpus(8, 30, seed=10):
        leaf = leaves.local_unstable_leaf(p, word, 30, backward=back)
        assert leaf.lipschitz_bound <= 1 / P.alpha
        slopes = np.abs(np.diff(leaf.ys) / np.diff(leaf.xs))
        assert slopes.max() <= leaf.lipschitz_bound + 1e-15
        assert leaf.vertical_error <= 2 * 0.5 ** 30
        assert leaf.y_at(p[0]) == pytest.approx(p[1], abs=1e-6)
        # no preimage of the open leaf meets the critical line; the domain
        # ends themselves are cuts and may land on it
        chain, ok = kernels.pull_chain(leaf.xs[1:-1], leaf.back, P.kernel_args)
        assert ok.all()
        for level, row in enumerate(chain[1:]):
            assert np.all(np.sign(row) == np.sign(row[0])) and np.all(row != 0), level


def test_periodic_leaf_tangent(period_two_point):
    pL, pR = period_two_point
    back = periodic_back(pL, pR, 30)
    leaf = leaves.local_unstable_leaf(pL, "RL" * 15, 30, backward=back)
    assert leaf.y_at(pL[0]) == pytest.approx(pL[1], abs=1e-9)
    h = 1e-5
    slope = (leaf.y_at(pL[0] + h) - leaf.y_at(pL[0] - h)) / (2 * h)
    d = cones.unstable_direction(pL, depth=30, backward=back)
    assert abs(slope - d.slope) <= d.error + 1e-6


def test_lambda_n_membership():
    for p, back, word in corpus(6, 30, seed=12):
        rep = leaves.past_stabilization_test(p, word, 30, backward=back)
        n0 = math.ceil(2 / rep.eta)
        assert leaves.lambda_n_member(p, word, n0, 30, backward=back)
        assert leaves.lambda_n_member(p, word, n0 + 1, 30, backward=back)
        if n0 > 1:
            member = [leaves.lambda_n_member(p, word, n, 30, backward=back) for n in range(1, n0 + 3)]
            assert member == sorted(member)
    with pytest.raises(ValueError):
        leaves.lambda_n_member((0.3, 0.0), "", 0, 0)


def test_beak_labels():
    tab = symbolic.postcritical_table()
    x0 = float(tab.left[3])
    leaf = leaves.leaf_from_chain((x0, x0 + 0.01), np.zeros(0, dtype=np.int8), 0.0, 0)
    cls = leaves.beak_detect(leaf)
    assert cls.left == "beak" and cls.left_match == (4, "L")
    assert cls.right == "truncated"
    clipped = leaves.leaf_from_chain((0.11111, 0.2), np.zeros(0, dtype=np.int8), 0.0, 0)
    assert leaves.beak_detect(clipped).left == "truncated"


def test_no_interior_beaks_on_random_leaves():
    for p, back, word in corpus(10, 30, seed=14):
        leaf = leaves.local_unstable_leaf(p, word, 30, backward=back)
        assert leaves.beak_detect(leaf).interior_cuts == ()


def test_chain_outside_ranges_has_no_leaf():
    with pytest.raises(NoLeafError, match="no leaf"):
        leaves.leaf_from_chain((0.9, 0.99), kernels.encode("R"), 0.0, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 5000))
def test_nesting_property(seed):
    for p, back, word in corpus(1, 25, seed=seed):
        rep = leaves.past_stabilization_test(p, word, 25, backward=back)
        members = [leaves.lambda_n_member(p, word, n, 25, backward=back) for n in range(1, 60)]
        first = members.index(True) if True in members else len(members)
        assert all(members[first:])
        assert rep.eta > 0
