"""Band, first-return branches, reference leaf, induced map and symbolic metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import lorenz_map as lm
from .errors import GeoLorenzError
from .leaves import LeafGraph, leaf_from_chain
from .lorenz_map import DEFAULT_PARAMS, MapParams
from .symbolic import BandSeed, PeriodicOrbit, postcritical_table

CONTAIN_TOL = 1e-12
ENDPOINT_TOL = 1e-9
REF_DEPTH = 60


class BandError(GeoLorenzError, ValueError):
    pass


@dataclass(frozen=True)
class Band:
    P_l: float
    P_r: float
    periodic_orbit: PeriodicOrbit
    delta_hat: float

    @property
    def side(self) -> str:
        return "L" if self.P_r < 0 else "R"

    @property
    def width(self) -> float:
        return self.P_r - self.P_l

    @classmethod
    def from_seed(cls, seed: BandSeed) -> "Band":
        return cls(seed.P_l, seed.P_r, seed.orbit, seed.delta_hat)

    def check(self, params: MapParams = DEFAULT_PARAMS) -> dict:
        d = self.delta_hat
        pts = self.periodic_orbit.sorted_points
        i = int(np.searchsorted(pts, self.P_l))
        return {
            "ordered": self.P_l < self.P_r,
            "avoids_zero": self.P_r < 0 or self.P_l > 0,
            "consecutive": i + 1 < len(pts) and pts[i] == self.P_l and pts[i + 1] == self.P_r,
            "f(delta) < -delta": bool(lm.f_eval(d, params) < -d) if d <= 1 else False,
            "f(-delta) > delta": bool(lm.f_eval(-d, params) > d) if d <= 1 else False,
            "gap_bound < delta": self.periodic_orbit.gap_bound < d,
        }

    def validate(self, params: MapParams = DEFAULT_PARAMS) -> "Band":
        bad = [k for k, v in self.check(params).items() if not v]
        if bad:
            raise BandError("invalid band: " + ", ".join(bad))
        return self


@dataclass
class ReturnBranch:
    index: int
    word: str
    return_time: int
    K_left: float
    K_right: float
    stripe_y_range: tuple = (math.nan, math.nan)
    markov_ok: bool | None = None

    @property
    def domain(self) -> tuple:
        return (self.K_left, self.K_right)

    @property
    def width(self) -> float:
        return self.K_right - self.K_left

    @property
    def back(self) -> np.ndarray:
        """Backward symbols of the return chain (side of F^-1 first)."""
        return kernels.encode(self.word[::-1])

    def inverse_map(self, x, params: MapParams = DEFAULT_PARAMS):
        """The branch inverse [P_l, P_r] -> K_i."""
        t = np.asarray(x, dtype=float)
        for s in reversed(self.word):
            t = kernels._inv_np(0 if s == "L" else 1, t, *params.kernel_args[:3])
        return t if np.ndim(x) else float(t)

    def forward(self, x, params: MapParams = DEFAULT_PARAMS):
        t = np.asarray(x, dtype=float)
        for _ in range(self.return_time):
            t = lm.f_eval(t, params)
        return t if np.ndim(x) else float(t)


@dataclass
class MilleFeuilles:
    band: Band
    reference_leaf: LeafGraph
    branches: list
    N_max: int
    params: MapParams = DEFAULT_PARAMS
    seed_index: int = 0
    seed_point: tuple = (math.nan, math.nan)
    ref_back: np.ndarray = field(default=None, repr=False)
    ref_y_start: float = 0.0

    def __post_init__(self):
        B = len(self.branches)
        self.syms = np.zeros((B, max(self.N_max, 1)), dtype=np.int8)
        for i, br in enumerate(self.branches):
            self.syms[i, :br.return_time] = kernels.encode(br.word)
        self.lengths = np.array([br.return_time for br in self.branches], dtype=np.int64)
        self.K_lo = np.array([br.K_left for br in self.branches])
        self.K_hi = np.array([br.K_right for br in self.branches])

    @property
    def coverage(self) -> float:
        return float(np.sum(self.K_hi - self.K_lo) / self.band.width)

    def reference_y(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        ys, _ = kernels.leaf_values(xa, self.ref_back, self.ref_y_start, self.params.kernel_args)
        return ys if np.ndim(x) else float(ys[0])

    def branch_of(self, x: float) -> int:
        hit = np.nonzero((self.K_lo <= x) & (x <= self.K_hi))[0]
        if len(hit) == 0:
            raise GeoLorenzError("outside induced domain (or beyond N_max)")
        return int(hit[0])

    def counts_by_time(self) -> dict:
        n, c = np.unique(self.lengths, return_counts=True)
        return dict(zip(n.tolist(), c.tolist()))

    def summary(self) -> dict:
        return {
            "P_l": self.band.P_l,
            "P_r": self.band.P_r,
            "delta_hat": self.band.delta_hat,
            "orbit_word": self.band.periodic_orbit.word,
            "N_max": self.N_max,
            "branch_count": len(self.branches),
            "coverage": self.coverage,
            "seed_word": self.branches[self.seed_index].word if self.branches else "",
            "seed_x": self.seed_point[0],
            "seed_y": self.seed_point[1],
        }


# ---------------------------------------------------------------- enumeration

def _enumerate_1d(P_l: float, P_r: float, N_max: int, params: MapParams):
    """Words w (forward itinerary) with f^|w| mapping K_w onto the band, K_w
    inside the band and no proper suffix returning first.

    Words are grown by prepending a symbol, so K_{s w} = inv_s(K_w).  A word
    whose interval already sits in the band is a return; its extensions are
    not first returns and are dropped.
    """
    rho, v_l, v_r = params.kernel_args[:3]
    lo = np.array([P_l])
    hi = np.array([P_r])
    codes = np.array([0], dtype=np.int64)
    found = []
    for n in range(1, N_max + 1):
        nlo, nhi, ncode = [], [], []
        for s in (0, 1):
            if s == 0:
                m = (lo >= v_l - CONTAIN_TOL) & (hi < 1.0)
            else:
                m = (lo > -1.0) & (hi <= v_r + CONTAIN_TOL)
            nlo.append(kernels._inv_np(s, lo[m], rho, v_l, v_r))
            nhi.append(kernels._inv_np(s, hi[m], rho, v_l, v_r))
            ncode.append(codes[m] + (s << (n - 1)))
        lo, hi, codes = np.concatenate(nlo), np.concatenate(nhi), np.concatenate(ncode)
        ret = (lo >= P_l - CONTAIN_TOL) & (hi <= P_r + CONTAIN_TOL)
        for a, b, c in zip(lo[ret], hi[ret], codes[ret]):
            word = "".join("R" if (int(c) >> (n - 1 - k)) & 1 else "L" for k in range(n))
            found.append((n, float(a), float(b), word))
        lo, hi, codes = lo[~ret], hi[~ret], codes[~ret]
    found.sort(key=lambda t: (t[0], t[1]))
    return found


def _ref_chain_ok(mf_back, y_start, K, params) -> bool:
    _, ok = kernels.leaf_values(np.array(K), mf_back, y_start, params.kernel_args, tol=1e-9)
    return bool(ok.all())


def enumerate_return_branches(band: Band, N_max: int, params: MapParams = DEFAULT_PARAMS,
                              reference=None) -> list:
    """First-return branches with return time <= N_max, ordered by (n, K_left).

    With ``reference`` = (back, y_start) of a band leaf, a branch is kept only
    if the pushed reference leaf over K spans the band: every level of the
    combined chain over the two band ends stays inside the branch ranges.
    """
    out = []
    for n, a, b, word in _enumerate_1d(band.P_l, band.P_r, N_max, params):
        br = ReturnBranch(len(out), word, n, a, b)
        if reference is not None:
            back = np.concatenate([br.back, reference[0]])
            if not _ref_chain_ok(back, reference[1], (band.P_l, band.P_r), params):
                continue
        out.append(br)
    return out


def _seed_periodic_point(branch: ReturnBranch, band: Band, params: MapParams):
    x = 0.5 * (band.P_l + band.P_r)
    for _ in range(200):
        x_new = branch.inverse_map(x, params)
        if x_new == x:
            break
        x = x_new
    # fibre: fixed point of the y-map along the periodic chain
    chain, _ = kernels.pull_chain([x], branch.back, params.kernel_args)
    y = 0.0
    for _ in range(200):
        y_new = y
        for k in range(branch.return_time - 1, -1, -1):
            y_new = kernels._g_np(int(branch.back[k]), chain[k + 1, 0], y_new,
                                  params.y_plus, params.y_minus, params.contraction_bound)
        if y_new == y:
            break
        y = float(y_new)
    return float(x), float(y)


def _reference(band: Band, seed: ReturnBranch, leaf_depth: int, params: MapParams, samples: int):
    reps = max(1, math.ceil(leaf_depth / seed.return_time))
    ref_back = np.tile(seed.back, reps)
    sx, sy = _seed_periodic_point(seed, band, params)
    ref = leaf_from_chain((band.P_l, band.P_r), ref_back, sy, len(ref_back), params, samples,
                          kinds=("band-border", "band-border"))
    tab = postcritical_table(1000, params)
    if tab.match(band.P_l, ENDPOINT_TOL) or tab.match(band.P_r, ENDPOINT_TOL):
        raise BandError("band border lies on the post-critical orbit")
    return ref, ref_back, (sx, sy)


def build_millefeuille(band: Band, N_max: int = 18, leaf_depth: int = REF_DEPTH,
                       params: MapParams = DEFAULT_PARAMS, samples: int = 512,
                       markov_leaves: int = 0) -> MilleFeuilles:
    """Reference leaf through the periodic point of the shortest return branch,
    then the return branches that carry it across the band."""
    band.validate(params)
    raw = enumerate_return_branches(band, N_max, params)
    if not raw:
        raise BandError("no spanning leaf found; shrink delta_hat or raise N_max")
    seed = raw[0]
    ref, ref_back, (sx, sy) = _reference(band, seed, leaf_depth, params, samples)
    branches = enumerate_return_branches(band, N_max, params, reference=(ref_back, sy))
    if not branches:
        raise BandError("no spanning leaf found; shrink delta_hat or raise N_max")
    seed_index = next(i for i, b in enumerate(branches) if b.word == seed.word)
    mf = MilleFeuilles(band, ref, branches, N_max, params, seed_index, (sx, sy), ref_back, sy)
    _stripes(mf)
    if markov_leaves:
        for br in mf.branches:
            br.markov_ok = markov_check(mf, br, markov_leaves)
    return mf


def restore_millefeuille(band: Band, branches: list, N_max: int, seed_index: int = 0,
                         leaf_depth: int = REF_DEPTH, params: MapParams = DEFAULT_PARAMS,
                         samples: int = 512) -> MilleFeuilles:
    """Rebuild a mille-feuilles from a stored branch table (no enumeration)."""
    if not branches:
        raise BandError("empty branch table")
    seed = branches[seed_index]
    ref, ref_back, (sx, sy) = _reference(band, seed, leaf_depth, params, samples)
    mf = MilleFeuilles(band, ref, list(branches), N_max, params, seed_index, (sx, sy), ref_back, sy)
    _stripes(mf)
    return mf


def _stripes(mf: MilleFeuilles, samples: int = 9):
    xs = np.linspace(mf.band.P_l, mf.band.P_r, samples)
    for br in mf.branches:
        ys, _ = kernels.leaf_values(xs, np.concatenate([br.back, mf.ref_back]), mf.ref_y_start,
                                    mf.params.kernel_args)
        br.stripe_y_range = (float(ys.min()), float(ys.max()))


# ---------------------------------------------------------------- Markov check

@dataclass
class MarkovDetail:
    ok: bool
    reasons: list


def _test_leaves(mf: MilleFeuilles, count: int):
    """Reference leaf, then its images through the shortest branches."""
    leaves = [mf.ref_back]
    for br in mf.branches:
        if len(leaves) >= count:
            break
        leaves.append(np.concatenate([br.back, mf.ref_back]))
    return leaves


def markov_check(mf: MilleFeuilles, branch: ReturnBranch, test_leaves: int = 3,
                 samples: int = 33, detail: bool = False):
    """Push leaves of the mille-feuilles over K_i forward n_i steps and check
    that each image is a 1/alpha-Lipschitz graph spanning [P_l, P_r], that no
    intermediate image crosses the critical line, and that the image ends are
    not post-critical."""
    p = mf.params
    band = mf.band
    reasons = []
    targets = np.linspace(band.P_l, band.P_r, samples)
    xi = branch.inverse_map(targets, p)
    tab = postcritical_table(1000, p)
    for t, back in enumerate(_test_leaves(mf, test_leaves)):
        ys, ok = kernels.leaf_values(xi, back, mf.ref_y_start, p.kernel_args, tol=1e-9)
        if not ok.all():
            reasons.append(f"leaf {t} not defined over K")
            continue
        x, y = xi.copy(), ys
        for k, s in enumerate(branch.word):
            side_ok = np.all(x < 0) if s == "L" else np.all(x > 0)
            if not side_ok:
                reasons.append(f"leaf {t}: image crosses the critical line at step {k}")
                break
            x, y = lm.f_eval(x, p), lm.g_eval(x, y, p)
        else:
            if abs(x[0] - band.P_l) > ENDPOINT_TOL or abs(x[-1] - band.P_r) > ENDPOINT_TOL:
                reasons.append(f"leaf {t}: image does not span the band")
            if np.any(np.diff(x) <= 0):
                reasons.append(f"leaf {t}: image is not a graph")
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = np.abs(np.diff(y) / np.diff(x))
            if np.any(slope > 1.0 / p.alpha + 1e-9):
                reasons.append(f"leaf {t}: Lipschitz bound exceeded")
            if np.any(np.abs(y) > 1.0):
                reasons.append(f"leaf {t}: image leaves the square")
            if tab.match(x[0], ENDPOINT_TOL) or tab.match(x[-1], ENDPOINT_TOL):
                reasons.append(f"leaf {t}: beak at image end")
    ok = not reasons
    return MarkovDetail(ok, reasons) if detail else ok


# ---------------------------------------------------------------- induced map

def induced_phi(x: float, mf: MilleFeuilles):
    """(phi(x), tau(x)) = (f^{n_i}(x), n_i) on K_i; shared ends go to the
    lower-indexed branch."""
    i = mf.branch_of(x)
    br = mf.branches[i]
    return br.forward(x, mf.params), br.return_time


def symbolic_metric(x: float, xp: float, delta_hat: float,
                    params: MapParams = DEFAULT_PARAMS, max_n: int = 200) -> float:
    """2^-m with m the largest n such that |f^k x - f^k x'| <= delta_hat for
    all k <= n; d = 1 when already |x - x'| > delta_hat."""
    if x == xp:
        return 0.0
    m = 0
    a, b = float(x), float(xp)
    for n in range(max_n + 1):
        if abs(a - b) > delta_hat:
            break
        m = n
        if a == 0.0 or b == 0.0:
            break
        a, b = lm.f_eval(a, params), lm.f_eval(b, params)
    return 2.0 ** (-m)


def holder_norm(values_a, values_b, d, gamma: float) -> float:
    """Empirical sup |u(x) - u(x')| / d(x,x')^gamma plus sup |u| over sampled
    pairs.  A lower bound for the true C^gamma norm."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    va = np.asarray(values_a, dtype=float)
    vb = np.asarray(values_b, dtype=float)
    d = np.asarray(d, dtype=float)
    sup = float(max(np.max(np.abs(va)), np.max(np.abs(vb)))) if va.size else 0.0
    pos = d > 0
    if not pos.any():
        return sup
    q = np.abs(va[pos] - vb[pos]) / d[pos] ** gamma
    return float(np.max(q)) + sup
