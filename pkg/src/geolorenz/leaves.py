"""Local unstable leaves: past-stabilization windows, b.s.r., graph transform, beaks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import lorenz_map as lm
from .errors import NoLeafError
from .lorenz_map import DEFAULT_PARAMS, MapParams
from .symbolic import postcritical_table

BEAK_TOL = 1e-9
DEFAULT_SAMPLES = 512


@dataclass(frozen=True)
class StabilizationReport:
    stabilized: bool
    delta: float
    first_cut_depths: tuple
    eta: float
    N_used: int
    window: tuple = (-1.0, 1.0)
    cut_points: tuple = ()


@dataclass
class LeafGraph:
    """Sampled graph y = phi(x) over [a, b].

    ``back`` and ``y_start`` reproduce the leaf exactly: it is the image under
    F^len(back) of the horizontal line y = y_start, pulled back along ``back``.
    """

    domain: tuple
    xs: np.ndarray
    ys: np.ndarray
    lipschitz_bound: float
    left_end_kind: str
    right_end_kind: str
    depth: int
    vertical_error: float
    back: np.ndarray = field(repr=False, default=None)
    y_start: float = 0.0
    params: MapParams = field(repr=False, default=DEFAULT_PARAMS)

    @property
    def samples(self):
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    def y_at(self, x):
        """Exact leaf height (recomputed through the chain, not interpolated)."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        ys, _ = kernels.leaf_values(xa, self.back, self.y_start, self.params.kernel_args)
        return ys if np.ndim(x) else float(ys[0])

    def interp(self, x):
        return np.interp(x, self.xs, self.ys)

    def contains(self, lo: float, hi: float) -> bool:
        return self.domain[0] <= lo and hi <= self.domain[1]


def _postcritical(depth: int, params: MapParams):
    tab = postcritical_table(max(depth + 2, 1000), params)
    return tab.left, tab.right


def _cut_image(side: str, which: str, j: int, pc_left, pc_right) -> float:
    """Level-0 position of a range endpoint hit at level j-1 along the chain.

    The upper end 1 of range(L) is f(0^-); the lower end v_l is f(-1) = f^2(0^+).
    Symmetrically for R.  Entry k of the post-critical arrays is f^(k+1)(0^side).
    """
    if side == "L":
        return float(pc_left[j - 1]) if which == "hi" else float(pc_right[j])
    return float(pc_right[j - 1]) if which == "lo" else float(pc_left[j])


def past_stabilization_test(p, word: str, depth: int, delta: float = 0.05,
                            params: MapParams = DEFAULT_PARAMS,
                            backward=None) -> StabilizationReport:
    """Track the largest window around x whose preimages along ``word`` stay
    inside the branch ranges down to ``depth``.

    The window starts as [-1, 1].  Whenever an end of a branch range falls
    inside the pulled-back window, the window is cut at the corresponding
    level-0 point (a post-critical point).  ``eta`` is twice the distance from
    x to the nearest cut.  ``delta`` in the report is the closest backward
    approach to 0.

    ``backward`` may supply a precomputed backward orbit (e.g. a reversed
    forward orbit), which avoids the vertical error growth of inverting g.
    """
    back = _backward(p, word, depth, params, backward)
    x = float(p[0])
    pc_left, pc_right = _postcritical(depth, params)
    E_lo, E_hi = -1.0, 1.0
    D_lo, D_hi = -1.0, 1.0
    cuts, cut_points = [], []
    for j in range(1, depth + 1):
        s = word[j - 1]
        r_lo, r_hi = lm.branch_range(s, params)
        cut_here = False
        if D_lo < r_lo < D_hi:
            c0 = _cut_image(s, "lo", j, pc_left, pc_right)
            if c0 < x:
                E_lo, D_lo = max(E_lo, c0), r_lo
            else:
                E_hi, D_hi = min(E_hi, c0), r_lo
            cut_here = True
            cut_points.append(c0)
        if D_lo < r_hi < D_hi:
            c0 = _cut_image(s, "hi", j, pc_left, pc_right)
            if c0 < x:
                E_lo, D_lo = max(E_lo, c0), r_hi
            else:
                E_hi, D_hi = min(E_hi, c0), r_hi
            cut_here = True
            cut_points.append(c0)
        if cut_here:
            cuts.append(j)
        D_lo, D_hi = _safe_inverse(s, D_lo, params), _safe_inverse(s, D_hi, params)
    eta = 2.0 * min(x - E_lo, E_hi - x)
    closest = float(np.min(np.abs(back[:, 0]))) if depth else abs(x)
    return StabilizationReport(eta > 0.0 and math.isfinite(eta), closest, tuple(cuts), eta,
                               depth, (E_lo, E_hi), tuple(cut_points))


def _backward(p, word, depth, params, backward):
    word = lm.check_word(word)
    if depth > len(word):
        raise ValueError(f"word of length {len(word)} shorter than depth {depth}")
    if backward is None:
        return lm.backward_orbit(p, word[:depth], params)
    back = np.asarray(backward, dtype=float)[:depth]
    if len(back) < depth:
        raise ValueError("backward orbit shorter than depth")
    return back


def _safe_inverse(side: str, x: float, params: MapParams) -> float:
    lo, hi = lm.branch_range(side, params)
    if side == "L" and x >= hi:
        return 0.0
    if side == "R" and x <= lo:
        return 0.0
    return lm.inverse_branch(side, min(max(x, lo), hi), params)


def bsr_diagnostic(p, word: str, delta: float = 0.05, depth: int | None = None,
                   params: MapParams = DEFAULT_PARAMS, backward=None) -> float:
    """(1/n) sum_{k<n} |log ||x_{-k}||_delta| with ||z||_delta = min(1, |z|/delta).

    Only backward visits closer than delta to 0 contribute.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = len(word) if depth is None else depth
    if n == 0:
        return 0.0
    back = _backward(p, word, n - 1, params, backward) if n > 1 else np.empty((0, 2))
    xs = np.concatenate([[float(p[0])], back[:, 0]])
    norm = np.minimum(1.0, np.abs(xs) / delta)
    return float(np.mean(np.abs(np.log(norm))))


def _refine(xs, ys, back, y_start, params, cap, rounds=4):
    for _ in range(rounds):
        slope = np.abs(np.diff(ys) / np.diff(xs))
        bad = np.nonzero(slope > cap)[0]
        if len(bad) == 0:
            break
        mids = 0.5 * (xs[bad] + xs[bad + 1])
        my, _ = kernels.leaf_values(mids, back, y_start, params.kernel_args)
        xs = np.insert(xs, bad + 1, mids)
        ys = np.insert(ys, bad + 1, my)
    return xs, ys


def leaf_from_chain(domain, back, y_start, depth, params: MapParams = DEFAULT_PARAMS,
                    samples: int = DEFAULT_SAMPLES, kinds=("truncated", "truncated")) -> LeafGraph:
    a, b = domain
    xs = np.linspace(a, b, samples)
    back = np.asarray(back, dtype=np.int8)
    ys, ok = kernels.leaf_values(xs, back, y_start, params.kernel_args, tol=1e-9)
    if not ok.all():
        raise NoLeafError("no leaf at requested depth: chain leaves the branch ranges")
    xs, ys = _refine(xs, ys, back, y_start, params, 0.9 / params.alpha)
    lip = float(np.max(np.abs(np.diff(ys) / np.diff(xs)))) if len(xs) > 1 else 0.0
    return LeafGraph((float(a), float(b)), xs, ys, lip, kinds[0], kinds[1], depth,
                     2.0 * 0.5 ** depth, back, float(y_start), params)


def local_unstable_leaf(p, word: str, depth: int, params: MapParams = DEFAULT_PARAMS,
                        samples: int = DEFAULT_SAMPLES, backward=None) -> LeafGraph:
    """Depth-``depth`` graph-transform approximation of W^u_loc(p) over
    (x - eta/2, x + eta/2)."""
    rep = past_stabilization_test(p, word, depth, params=params, backward=backward)
    if not rep.stabilized:
        raise NoLeafError("no leaf at requested depth")
    x = float(p[0])
    half = 0.5 * rep.eta
    if depth:
        y_start = float(_backward(p, word, depth, params, backward)[-1][1])
    else:
        y_start = float(p[1])
    back = kernels.encode(word[:depth])
    leaf = leaf_from_chain((x - half, x + half), back, y_start, depth, params, samples)
    cls = beak_detect(leaf)
    leaf.left_end_kind, leaf.right_end_kind = cls.left, cls.right
    return leaf


def lambda_n_member(p, word: str, n: int, depth: int,
                    params: MapParams = DEFAULT_PARAMS, backward=None) -> bool:
    """True iff the depth-``depth`` leaf through p is a graph over (x-1/n, x+1/n)."""
    if n <= 0:
        raise ValueError("n must be positive")
    rep = past_stabilization_test(p, word, depth, params=params, backward=backward)
    return rep.stabilized and 0.5 * rep.eta >= 1.0 / n


@dataclass(frozen=True)
class EndpointClassification:
    left: str
    right: str
    left_match: tuple | None
    right_match: tuple | None
    interior_cuts: tuple


def beak_detect(leaf: LeafGraph, postcritical_depth: int = 1000,
                tol: float = BEAK_TOL) -> EndpointClassification:
    """Label each end 'beak' when it sits on the post-critical table, else
    'truncated'.  ``interior_cuts`` lists chain levels where a branch-range
    end falls strictly inside the pulled-back domain, which is what a beak in
    the interior of the leaf would mean."""
    tab = postcritical_table(postcritical_depth, leaf.params)
    a, b = leaf.domain
    lm_ = tab.match(a, tol)
    rm_ = tab.match(b, tol)
    interior = []
    lo, hi = a, b
    for k, s in enumerate(leaf.back if leaf.back is not None else ()):
        side = "L" if s == 0 else "R"
        r_lo, r_hi = lm.branch_range(side, leaf.params)
        if lo + tol < r_lo < hi - tol or lo + tol < r_hi < hi - tol:
            interior.append(k + 1)
        lo, hi = _safe_inverse(side, lo, leaf.params), _safe_inverse(side, hi, leaf.params)
    return EndpointClassification("beak" if lm_ else "truncated", "beak" if rm_ else "truncated",
                                  lm_, rm_, tuple(interior))


def postcritical_points(depth: int = 1000, params: MapParams = DEFAULT_PARAMS):
    return postcritical_table(depth, params)
