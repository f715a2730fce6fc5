"""Unstable cone field, hyperbolic jumps, unstable direction, Lyapunov exponents.

Directions are slopes v/u with u > 0.  The unstable cone
C^u = {|u| >= alpha |v|} is the slope interval [-1/alpha, 1/alpha].  Because
DF is lower triangular the vertical never enters a propagated unstable cone,
so slope intervals never wrap around.

Backward orbits are arrays with ``backward[k] = F^{-(k+1)}(p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lorenz_map as lm
from .errors import BivaluedPointError
from .lorenz_map import DEFAULT_PARAMS, MapParams

SQRT2 = math.sqrt(2.0)
TWO_SQRT2 = 2.0 * SQRT2

# Frozen from ``calibrate_cone_constants(DEFAULT_PARAMS, n_orbits=1000, depth=30,
# seed=0)``: observed sup of width(n) (2 sqrt2)^n / width(0) was 1.0 (attained
# at n = 0), observed sup |slope| was 0.509.  KAPPA_HAT is the one-step bound
# (0.45 + 0.5/alpha)/1.4625 = 0.687 on the attractor, rounded up.  Tests re-run
# independent sweeps and assert neither constant is exceeded.
CONE_C_HAT = 1.0
KAPPA_HAT = 0.75


@dataclass(frozen=True)
class ProjectiveCone:
    """Slope interval mid +- half_width; the half-width is tracked on its own
    so that it keeps full relative precision long after it drops below the
    ulp of the midpoint."""

    mid: float
    half_width: float
    depth: int = 0

    @property
    def slope_lo(self) -> float:
        return self.mid - self.half_width

    @property
    def slope_hi(self) -> float:
        return self.mid + self.half_width

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    def inside(self, lo: float, hi: float) -> bool:
        return lo <= self.slope_lo and self.slope_hi <= hi


@dataclass
class JumpRecord:
    jump_times: list
    gaps: list
    terminal_index: int
    N_alpha: int


def unstable_cone(params: MapParams = DEFAULT_PARAMS) -> ProjectiveCone:
    return ProjectiveCone(0.0, 1.0 / params.alpha, 0)


def push_slopes(p, mid: float, half: float, params: MapParams = DEFAULT_PARAMS):
    """Image of the slope interval mid +- half under DF(p)."""
    x, y = p
    if x == 0:
        raise BivaluedPointError("differential undefined at x = 0")
    fp = lm.f_prime(x, params)
    gx = lm.dg_dx(x, y, params)
    gy = lm.dg_dy(x, y, params)
    return (gx + gy * mid) / fp, abs(gy) / fp * half


def propagate_cone(backward, n: int, params: MapParams = DEFAULT_PARAMS,
                   record: bool = False):
    """DF^n(F^{-n} p) applied to C^u, as a slope interval at p.

    With ``record=True`` also returns the list of intermediate cones
    (depth 0 .. n, measured from the start of the propagation).
    """
    backward = np.asarray(backward, dtype=float)
    if n > len(backward):
        raise ValueError(f"backward orbit of length {len(backward)} shorter than depth {n}")
    mid, half = 0.0, 1.0 / params.alpha
    history = [ProjectiveCone(mid, half, 0)]
    for step, k in enumerate(range(n - 1, -1, -1), start=1):
        mid, half = push_slopes(backward[k], mid, half, params)
        if record:
            history.append(ProjectiveCone(mid, half, step))
    cone = ProjectiveCone(mid, half, n)
    return (cone, history) if record else cone


def K_hat(params: MapParams = DEFAULT_PARAMS) -> float:
    """Fixed point of R -> (1/2 + alpha M) R + M/2."""
    return (params.M / 2.0) / (0.5 - params.alpha * params.M)


def N_alpha(params: MapParams = DEFAULT_PARAMS) -> int:
    """First n with alpha (sqrt2)^n / (alpha K + 1) > 1."""
    if params.alpha * params.M >= 0.5:
        raise ValueError("alpha*M must be < 1/2")
    denom = params.alpha * K_hat(params) + 1.0
    n = 1
    while params.alpha * SQRT2 ** n / denom <= 1.0:
        n += 1
    return n


def hyperbolic_jump_sequence(backward, params: MapParams = DEFAULT_PARAMS) -> JumpRecord:
    """Greedy sequence of hyperbolic jumps from the deepest point towards p.

    Times are negative indices: the start is -len(backward) and each jump
    lands at the first time where the propagated cone re-enters C^u.
    """
    backward = np.asarray(backward, dtype=float)
    n = len(backward)
    if n < 1:
        raise ValueError("orbit shorter than one gap")
    cap = 1.0 / params.alpha
    start = -n
    times, gaps = [start], []
    mid, half = 0.0, cap
    steps = 0
    for k in range(n - 1, -1, -1):
        mid, half = push_slopes(backward[k], mid, half, params)
        steps += 1
        if abs(mid) + half <= cap:
            t = -k
            gaps.append(steps)
            times.append(t)
            mid, half, steps = 0.0, cap, 0
    if not gaps:
        raise ValueError("orbit shorter than one gap")
    return JumpRecord(jump_times=times, gaps=gaps, terminal_index=times[-1],
                      N_alpha=N_alpha(params))


def jump_condition(p, params: MapParams = DEFAULT_PARAMS) -> float:
    """|f'(x)| / (|g_x| alpha + |g_y|); a single-step jump happens when > 1."""
    x, y = p
    return abs(lm.f_prime(x, params)) / (abs(lm.dg_dx(x, y, params)) * params.alpha
                                          + abs(lm.dg_dy(x, y, params)))


@dataclass(frozen=True)
class Direction:
    slope: float
    error: float
    depth: int


def unstable_direction(p, word: str | None = None, depth: int = 30,
                       params: MapParams = DEFAULT_PARAMS, backward=None,
                       kappa: float = KAPPA_HAT) -> Direction:
    """Midpoint and half-width of the depth-``depth`` propagated cone at p."""
    if backward is None:
        backward = lm.backward_orbit(p, word, params)
    cone = propagate_cone(backward, depth, params)
    if depth > 0 and max(abs(cone.slope_lo), abs(cone.slope_hi)) > kappa:
        raise AssertionError(f"propagated cone leaves the enclosing cone |slope| <= {kappa}")
    return Direction(cone.mid, 0.5 * cone.width, depth)


def push_direction(p, slope: float, params: MapParams = DEFAULT_PARAMS) -> float:
    x, y = p
    return (lm.dg_dx(x, y, params) + lm.dg_dy(x, y, params) * slope) / lm.f_prime(x, params)


@dataclass
class GrowthReport:
    norm: float
    bound: float
    n: int

    @property
    def ok(self) -> bool:
        return self.norm >= self.bound * (1 - 1e-12)


def cone_norm_constant(params: MapParams = DEFAULT_PARAMS) -> float:
    return math.sqrt(1.0 + 1.0 / params.alpha ** 2)


def expansion_check(p, w, n: int, params: MapParams = DEFAULT_PARAMS) -> GrowthReport:
    """Compare ||DF^n(p) w|| with (sqrt2)^n / sqrt(1 + 1/alpha^2) ||w||."""
    u, v = float(w[0]), float(w[1])
    if abs(u) < params.alpha * abs(v) * (1 - 1e-12):
        raise ValueError("w is not in the unstable cone")
    norm0 = math.hypot(u, v)
    x, y = p
    for _ in range(n):
        if abs(x) < lm.ZERO_GUARD:
            raise BivaluedPointError("forward orbit hits x = 0")
        u, v = lm.f_prime(x, params) * u, lm.dg_dx(x, y, params) * u + lm.dg_dy(x, y, params) * v
        x, y = lm.f_eval(x, params), lm.g_eval(x, y, params)
    bound = SQRT2 ** n / cone_norm_constant(params) * norm0
    return GrowthReport(math.hypot(u, v), bound, n)


@dataclass(frozen=True)
class LyapunovPair:
    lambda_s: float
    lambda_u: float


def lyapunov_exponents(points, weights=None, params: MapParams = DEFAULT_PARAMS) -> LyapunovPair:
    """Averages of log|dg/dy| and log f' over an orbit or weighted cloud."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(np.abs(pts[:, 0]) < lm.ZERO_GUARD):
        raise BivaluedPointError("sample within 1e-12 of the critical set")
    if weights is None:
        w = np.full(len(pts), 1.0 / len(pts))
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
    ls = float(np.dot(w, np.log(np.abs(lm.dg_dy(pts[:, 0], pts[:, 1], params)))))
    lu = float(np.dot(w, np.log(lm.f_prime(pts[:, 0], params))))
    return LyapunovPair(ls, lu)


def log_derivative_product(orbit, params: MapParams = DEFAULT_PARAMS) -> float:
    """(1/n) log of the (1,1) entry of the DF^n matrix product along ``orbit``."""
    M = np.eye(2)
    scale = 0.0
    for p in orbit:
        M = lm.DF(p, params) @ M
        s = abs(M[0, 0])
        scale += math.log(s)
        M /= s
    return scale / len(orbit)


# ---------------------------------------------------------------- calibration

@dataclass
class ConeCalibration:
    C_hat: float
    kappa_hat: float
    n_orbits: int
    depth: int
    max_ratio_after5: float = 0.0
    notes: dict = field(default_factory=dict)


def random_backward_orbits(n_orbits: int, depth: int, params: MapParams = DEFAULT_PARAMS,
                           seed: int = 0, burn_in: int = 50):
    """Exactly admissible backward orbits obtained by reversing forward orbits.

    Yields (p, backward, word).
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_orbits):
        while True:
            start = (rng.uniform(-1, 1), rng.uniform(-1, 1))
            try:
                orb = lm.forward_orbit(start, burn_in + depth, params)
            except BivaluedPointError:
                continue
            break
        seg = orb[burn_in:]
        p = tuple(seg[-1])
        backward = seg[:-1][::-1].copy()
        yield p, backward, lm.orbit_word(seg)


def calibrate_cone_constants(params: MapParams = DEFAULT_PARAMS, n_orbits: int = 1000,
                             depth: int = 30, seed: int = 0) -> ConeCalibration:
    C = 0.0
    kappa = 0.0
    ratio5 = 0.0
    for _, back, _ in random_backward_orbits(n_orbits, depth, params, seed):
        _, hist = propagate_cone(back, depth, params, record=True)
        w0 = hist[0].width
        for c in hist:
            C = max(C, c.width * TWO_SQRT2 ** c.depth / w0)
            if c.depth > 0:
                kappa = max(kappa, abs(c.slope_lo), abs(c.slope_hi))
        for a, b in zip(hist[5:-1], hist[6:]):
            ratio5 = max(ratio5, b.width / a.width)
    return ConeCalibration(C, kappa, n_orbits, depth, ratio5)
