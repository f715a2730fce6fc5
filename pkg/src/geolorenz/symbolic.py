"""Itinerary coding, post-critical orbits and periodic orbits of f."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lorenz_map as lm
from .errors import CodeAmbiguousError, InadmissibleWordError
from .lorenz_map import DEFAULT_PARAMS, MapParams


def itinerary(x: float, n: int, params: MapParams = DEFAULT_PARAMS) -> str:
    """First n symbols of the forward itinerary of x ('L' iff f^k(x) < 0)."""
    out = []
    for k in range(n):
        if abs(x) < lm.ZERO_GUARD:
            raise CodeAmbiguousError(f"code ambiguous: f^{k}(x) = {x:.3g} hits 0")
        out.append("L" if x < 0 else "R")
        if k < n - 1:
            x = lm.f_eval(x, params)
    return "".join(out)


@dataclass(frozen=True)
class PostCriticalTable:
    """x_k = f^k(0^side) for k = 1..depth; side L starts at 1, side R at -1."""

    depth: int
    left: np.ndarray
    right: np.ndarray

    def values(self) -> np.ndarray:
        return np.concatenate([self.left, self.right])

    def rows(self):
        for k in range(self.depth):
            yield k + 1, "L", float(self.left[k])
        for k in range(self.depth):
            yield k + 1, "R", float(self.right[k])

    def distance(self, x) -> np.ndarray:
        vals = np.sort(self.values())
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(vals, xa), 1, len(vals) - 1)
        d = np.minimum(np.abs(xa - vals[idx - 1]), np.abs(xa - vals[idx]))
        return d

    def match(self, x: float, tol: float = 1e-9):
        """(k, side) of the first table entry within tol of x, or None."""
        for arr, side in ((self.left, "L"), (self.right, "R")):
            hit = np.nonzero(np.abs(arr - x) <= tol)[0]
            if len(hit):
                return int(hit[0]) + 1, side
        return None


def _orbit_values(x0: float, depth: int, params: MapParams) -> np.ndarray:
    out = np.empty(depth)
    x = x0
    for k in range(depth):
        out[k] = x
        if x == 0.0:
            out[k + 1:] = np.nan
            break
        x = lm.f_eval(x, params)
    return out


@lru_cache(maxsize=16)
def postcritical_table(depth: int = 1000, params: MapParams = DEFAULT_PARAMS) -> PostCriticalTable:
    return PostCriticalTable(depth, _orbit_values(lm.f_side_limit("L"), depth, params),
                             _orbit_values(lm.f_side_limit("R"), depth, params))


@dataclass(frozen=True)
class PeriodicOrbit:
    word: str
    points: tuple
    period: int
    gap_bound: float

    @property
    def sorted_points(self) -> np.ndarray:
        return np.sort(np.asarray(self.points))


def gap_bound(points) -> float:
    """Largest gap between consecutive sorted points, with -1 and 1 as sentinels."""
    pts = np.concatenate([[-1.0], np.sort(np.asarray(points, dtype=float)), [1.0]])
    return float(np.max(np.diff(pts)))


def _clamp_inverse(side: str, z: float, params: MapParams):
    """Inverse branch of z clamped into the branch range, and whether z was inside."""
    lo, hi = lm.branch_range(side, params)
    if side == "L":
        inside = lo <= z < hi
        return (0.0 if z >= hi else lm.inverse_branch(side, max(z, lo), params)), inside
    inside = lo < z <= hi
    return (0.0 if z <= lo else lm.inverse_branch(side, min(z, hi), params)), inside


def periodic_point(word: str, params: MapParams = DEFAULT_PARAMS, seed: float = 0.0,
                   max_iter: int = 200) -> float:
    """Point x with itinerary ``word`` and f^|word|(x) = x.

    Found as the fixed point of the composed inverse branches, a contraction
    by at least 2^(-|word|/2).  Raises InadmissibleWordError when the word
    is not realised.
    """
    lm.check_word(word)
    if not word:
        raise ValueError("word must be non-empty")
    z = seed
    for it in range(max_iter):
        z_old = z
        for s in reversed(word):
            z, _ = _clamp_inverse(s, z, params)
        if abs(z - z_old) <= 1e-16:
            break
    else:
        raise InadmissibleWordError(
            f"no convergence for {word!r} in {max_iter} iterations (last step {abs(z - z_old):.3g})")
    orbit = _orbit_from_fixed_point(word, z, params)
    if orbit is None:
        raise InadmissibleWordError(f"word {word!r} is not admissible")
    return z


def _orbit_from_fixed_point(word: str, x0: float, params: MapParams):
    """Orbit points computed by inversion; None if any step leaves its branch."""
    p = len(word)
    pts = np.empty(p)
    pts[0] = x0
    # x_k = f^k(x0), obtained by inverting the tail of the word from x0 = x_p
    for k in range(p - 1, 0, -1):
        z = x0
        for s in reversed(word[k:]):
            z, inside = _clamp_inverse(s, z, params)
            if not inside:
                return None
        pts[k] = z
    z = x0
    for s in reversed(word):
        z, inside = _clamp_inverse(s, z, params)
        if not inside:
            return None
    for k, s in enumerate(word):
        x = pts[k]
        if x == 0 or (x < 0) != (s == "L") or abs(x) < lm.ZERO_GUARD:
            return None
        if abs(lm.f_eval(x, params) - pts[(k + 1) % p]) > 1e-10:
            return None
    return pts


def periodic_orbit(word: str, params: MapParams = DEFAULT_PARAMS) -> PeriodicOrbit:
    x0 = periodic_point(word, params)
    pts = _orbit_from_fixed_point(word, x0, params)
    return PeriodicOrbit(word, tuple(float(v) for v in pts), len(word), gap_bound(pts))


def try_periodic_orbit(word: str, params: MapParams = DEFAULT_PARAMS):
    try:
        return periodic_orbit(word, params)
    except InadmissibleWordError:
        return None


def words(length: int):
    """All words of a given length in lexicographic order (L < R)."""
    for tup in itertools.product("LR", repeat=length):
        yield "".join(tup)


@dataclass(frozen=True)
class BandSeed:
    orbit: PeriodicOrbit
    P_l: float
    P_r: float
    delta_hat: float
    postcritical_distance: float


def band_pairs(orbit: PeriodicOrbit, table: PostCriticalTable):
    """Consecutive same-side pairs (P_l, P_r, distance to post-critical table)."""
    pts = orbit.sorted_points
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        if a < 0 < b:
            continue
        d = float(np.min(table.distance([a, b])))
        out.append((float(a), float(b), d))
    return out


def delta_dense_periodic_orbit(delta_hat: float, max_period: int = 14,
                               params: MapParams = DEFAULT_PARAMS,
                               postcritical_depth: int = 1000,
                               min_distance: float = 1e-6, skip: int = 0) -> BandSeed:
    """First periodic orbit (by period, then lexicographically) with gap_bound
    below delta_hat and a usable band pair.

    ``skip`` passes over that many accepted orbits, which gives independent
    bands for cross-checks.
    """
    if delta_hat <= 0:
        raise ValueError("delta_hat must be positive")
    table = postcritical_table(postcritical_depth, params)
    seen = set()
    for p in range(1, max_period + 1):
        for w in words(p):
            orb = try_periodic_orbit(w, params)
            if orb is None or orb.gap_bound >= delta_hat:
                continue
            key = tuple(np.round(orb.sorted_points, 12))
            if key in seen:
                continue
            seen.add(key)
            if float(np.min(table.distance(orb.points))) <= min_distance:
                continue
            pairs = [pr for pr in band_pairs(orb, table) if pr[2] > min_distance]
            if not pairs:
                continue
            if skip > 0:
                skip -= 1
                continue
            best = max(pairs, key=lambda pr: (pr[2], -pr[0]))
            return BandSeed(orb, best[0], best[1], delta_hat, best[2])
    raise ValueError("no delta-dense periodic orbit found; increase max_period")
