"""The skew-product map F(x, y) = (f(x), g(x, y)) on the square [-1, 1]^2.

Only one formula family is implemented ("default"), with every coefficient
overridable::

    f(x) = -1 + (1 + v_r) * x**rho          for 0 < x <= 1
    f(x) =  1 - (1 - v_l) * |x|**rho        for -1 <= x < 0
    g(x, y) = y_plus  + c * |x| * y         for x < 0
    g(x, y) = y_minus + c * |x| * y         for x > 0

where ``c`` is ``contraction_bound``.  Symbols are 'L' (x < 0) and 'R'
(x > 0); a branch word is a plain ``str`` over that alphabet.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import BivaluedPointError, BranchRangeError, InadmissibleWordError

SQRT2 = math.sqrt(2.0)
ZERO_GUARD = 1e-12
INVERSE_TOL = 1e-12


@dataclass(frozen=True)
class MapParams:
    rho: float = 0.75
    v_l: float = -0.95
    v_r: float = 0.95
    contraction_bound: float = 0.5
    M: float = 0.5
    y_plus: float = 0.4
    y_minus: float = -0.4
    alpha: float = 0.9
    formula: str = "default"

    @property
    def kernel_args(self):
        """Float tuple consumed by the compiled kernels."""
        return (float(self.rho), float(self.v_l), float(self.v_r),
                float(self.y_plus), float(self.y_minus),
                float(self.contraction_bound))

    def with_(self, **changes) -> "MapParams":
        return replace(self, **changes)


DEFAULT_PARAMS = MapParams()


def check_word(word: str) -> str:
    if not isinstance(word, str) or any(s not in "LR" for s in word):
        raise ValueError(f"branch word must be a string over 'LR', got {word!r}")
    return word


def side_of(x: float) -> str:
    if x == 0:
        raise BivaluedPointError("bivalued point; use f_side_limit")
    return "L" if x < 0 else "R"


# ---------------------------------------------------------------- base map

def f_eval(x, params: MapParams = DEFAULT_PARAMS):
    """Evaluate f.  Accepts scalars or arrays; x = 0 is rejected."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa == 0.0):
        raise BivaluedPointError("bivalued point; use f_side_limit")
    if np.any(np.abs(xa) > 1.0):
        raise ValueError("x outside [-1, 1]")
    ax = np.abs(xa) ** params.rho
    out = np.where(xa > 0, -1.0 + (1.0 + params.v_r) * ax,
                   1.0 - (1.0 - params.v_l) * ax)
    return float(out) if out.ndim == 0 else out


def f_side_limit(side: str) -> float:
    """f(0^-) = 1 and f(0^+) = -1."""
    if side == "L":
        return 1.0
    if side == "R":
        return -1.0
    raise ValueError(f"side must be 'L' or 'R', got {side!r}")


def f_prime(x, params: MapParams = DEFAULT_PARAMS):
    xa = np.asarray(x, dtype=float)
    if np.any(xa == 0.0):
        raise BivaluedPointError("f' is infinite at the bivalued point 0")
    const = np.where(xa > 0, params.rho * (1.0 + params.v_r),
                     params.rho * (1.0 - params.v_l))
    out = const * np.abs(xa) ** (params.rho - 1.0)
    return float(out) if out.ndim == 0 else out


def branch_constant(side: str, params: MapParams = DEFAULT_PARAMS) -> float:
    """c such that f'(x) = c |x|^(rho - 1) on the given branch."""
    if side == "R":
        return params.rho * (1.0 + params.v_r)
    return params.rho * (1.0 - params.v_l)


def branch_range(side: str, params: MapParams = DEFAULT_PARAMS):
    """Image of a branch as (lo, hi); L is [v_l, 1), R is (-1, v_r]."""
    if side == "L":
        return params.v_l, 1.0
    if side == "R":
        return -1.0, params.v_r
    raise ValueError(f"side must be 'L' or 'R', got {side!r}")


def inverse_branch(side: str, x: float, params: MapParams = DEFAULT_PARAMS) -> float:
    """Closed-form inverse of one branch of f."""
    lo, hi = branch_range(side, params)
    if side == "L":
        if not (lo - INVERSE_TOL <= x < hi):
            raise BranchRangeError(f"{x!r} not in branch range of L [{lo}, {hi})")
        u = max(1.0 - x, 0.0) / (1.0 - params.v_l)
        return -min(u, 1.0) ** (1.0 / params.rho)
    if not (lo < x <= hi + INVERSE_TOL):
        raise BranchRangeError(f"{x!r} not in branch range of R ({lo}, {hi}]")
    u = max(x + 1.0, 0.0) / (1.0 + params.v_r)
    return min(u, 1.0) ** (1.0 / params.rho)


def inverse_branch_bisect(side: str, x: float, params: MapParams = DEFAULT_PARAMS,
                          tol: float = INVERSE_TOL) -> float:
    """Inverse branch by monotone bisection plus one Newton polish.

    Uses only ``f_eval`` and ``f_prime``; serves as the oracle for the
    closed-form inverse.
    """
    lo_r, hi_r = branch_range(side, params)
    if not (lo_r - tol <= x <= hi_r + tol) or (side == "L" and x >= 1.0) \
            or (side == "R" and x <= -1.0):
        raise BranchRangeError(f"{x!r} not in branch range of {side}")
    a, b = (-1.0, -1e-300) if side == "L" else (1e-300, 1.0)
    for _ in range(200):
        m = 0.5 * (a + b)
        if f_eval(m, params) < x:
            a = m
        else:
            b = m
        if b - a < tol * 1e-2:
            break
    z = 0.5 * (a + b)
    if z != 0.0:
        z_new = z - (f_eval(z, params) - x) / f_prime(z, params)
        if (side == "L" and -1.0 <= z_new < 0) or (side == "R" and 0 < z_new <= 1.0):
            z = z_new
    return z


# ---------------------------------------------------------------- fibre map

def g_eval(x, y, params: MapParams = DEFAULT_PARAMS):
    xa = np.asarray(x, dtype=float)
    if np.any(xa == 0.0):
        raise BivaluedPointError("bivalued point; g(0^-, y) = y_plus, g(0^+, y) = y_minus")
    out = np.where(xa < 0, params.y_plus, params.y_minus) \
        + params.contraction_bound * np.abs(xa) * np.asarray(y, dtype=float)
    return float(out) if out.ndim == 0 else out


def g_side_limit(side: str, params: MapParams = DEFAULT_PARAMS) -> float:
    return params.y_plus if side == "L" else params.y_minus


def dg_dx(x, y, params: MapParams = DEFAULT_PARAMS):
    xa = np.asarray(x, dtype=float)
    out = np.sign(xa) * params.contraction_bound * np.asarray(y, dtype=float)
    return float(out) if out.ndim == 0 else out


def dg_dy(x, y=None, params: MapParams = DEFAULT_PARAMS):
    out = params.contraction_bound * np.abs(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def F_apply(p, params: MapParams = DEFAULT_PARAMS):
    x, y = p
    if x == 0:
        raise BivaluedPointError("critical set x = 0 has two images")
    return (f_eval(x, params), g_eval(x, y, params))


def DF(p, params: MapParams = DEFAULT_PARAMS) -> np.ndarray:
    """Lower-triangular differential [[f'(x), 0], [dg/dx, dg/dy]]."""
    x, y = p
    if x == 0:
        raise BivaluedPointError("differential undefined on the critical set")
    return np.array([[f_prime(x, params), 0.0],
                     [dg_dx(x, y, params), dg_dy(x, y, params)]])


def forward_orbit(p, n: int, params: MapParams = DEFAULT_PARAMS) -> np.ndarray:
    """Array of shape (n + 1, 2) holding p, F(p), ..., F^n(p)."""
    out = np.empty((n + 1, 2))
    x, y = p
    out[0] = x, y
    for k in range(1, n + 1):
        if abs(x) < ZERO_GUARD:
            raise BivaluedPointError(f"orbit lands within {ZERO_GUARD} of 0 at step {k - 1}")
        x, y = f_eval(x, params), g_eval(x, y, params)
        out[k] = x, y
    return out


def backward_orbit(p, word: str, params: MapParams = DEFAULT_PARAMS,
                   ytol: float = 1e-9) -> np.ndarray:
    """Preimages F^{-1}(p), ..., F^{-|word|}(p) along the given branches.

    ``word[k]`` is the side of the (k+1)-th preimage.  Returns an array of
    shape (len(word), 2).  The fibre preimage is solved from g(x', y') = y,
    which expands vertical errors by at least 2 per step.
    """
    check_word(word)
    out = np.empty((len(word), 2))
    x, y = p
    c = params.contraction_bound
    for k, s in enumerate(word):
        try:
            xp = inverse_branch(s, x, params)
        except BranchRangeError as exc:
            raise InadmissibleWordError(
                f"x-preimage fails at depth {k + 1}: {exc}", depth=k + 1) from None
        if xp == 0.0:
            raise InadmissibleWordError(f"preimage hits the critical set at depth {k + 1}",
                                        depth=k + 1)
        yp = (y - g_side_limit(s, params)) / (c * abs(xp))
        if abs(yp) > 1.0 + ytol:
            raise InadmissibleWordError(
                f"y-preimage {yp:.6g} leaves [-1, 1] at depth {k + 1}", depth=k + 1)
        x, y = xp, min(max(yp, -1.0), 1.0)
        out[k] = x, y
    return out


def attractor_point(seed_xy, burn_in: int, params: MapParams = DEFAULT_PARAMS):
    """Forward orbit segment (burn_in + 1 points) ending on the attractor.

    Reversing it gives an exactly admissible backward orbit of its last
    point, with no inversion error.
    """
    return forward_orbit(seed_xy, burn_in, params)


def orbit_word(orbit: np.ndarray) -> str:
    """Backward branch word of ``orbit[-1]`` read off a forward orbit."""
    xs = orbit[:-1, 0][::-1]
    return "".join("L" if x < 0 else "R" for x in xs)


# ---------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    params: MapParams
    checks: dict = field(default_factory=dict)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks[name] = (bool(passed), detail)

    @property
    def ok(self) -> bool:
        return all(p for p, _ in self.checks.values())

    def failures(self):
        return [name for name, (p, _) in self.checks.items() if not p]

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self.params, f.name)}" for f in fields(self.params)]
        for name, (passed, detail) in self.checks.items():
            status = "pass" if passed else "FAIL"
            lines.append(f"check.{name} = {status}" + (f"  # {detail}" if detail else ""))
        lines.append(f"overall = {'pass' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def validate_params(params: MapParams = DEFAULT_PARAMS, grid: int = 10_000,
                    probe_depth: int = 10_000) -> ValidationReport:
    """Check the standing hypotheses on a map instance; never raises."""
    rep = ValidationReport(params)
    p = params
    rep.add("ranges",
            0 < p.rho < 1 and -1 < p.v_l < 0 < p.v_r < 1 and 0 < p.y_plus < 1
            and -1 < p.y_minus < 0 and p.M > 0 and p.alpha > 0,
            "rho in (0,1), -1<v_l<0<v_r<1, y_+ in (0,1), y_- in (-1,0), M>0, alpha>0")
    if not rep.ok:
        return rep

    xr = np.linspace(1.0 / grid, 1.0, grid)
    xl = -xr[::-1]
    fr, fl = f_eval(xr, p), f_eval(xl, p)
    onto = (abs(f_eval(1.0, p) - p.v_r) < 1e-14 and abs(f_eval(-1.0, p) - p.v_l) < 1e-14
            and abs(f_eval(1e-300, p) + 1.0) < 1e-12 and abs(f_eval(-1e-300, p) - 1.0) < 1e-12)
    mono = bool(np.all(np.diff(fr) > 0) and np.all(np.diff(fl) > 0))
    rep.add("branches_increasing_onto", onto and mono,
            "f([-1,0)) = [v_l,1), f((0,1]) = (-1,v_r], strictly increasing")

    fp = np.concatenate([f_prime(xl, p), f_prime(xr, p)])
    rep.add("expansion", float(fp.min()) >= SQRT2, f"min f' = {fp.min():.6g} vs sqrt2")

    small = 10.0 ** -np.arange(1, 13)
    win_ok = True
    for s, xs in (("R", small), ("L", -small)):
        ratio = f_prime(xs, p) * np.abs(xs) ** (1 - p.rho) / branch_constant(s, p)
        win_ok &= bool(np.all((ratio >= 0.5) & (ratio <= 2.0)))
    rep.add("non_flat_singularity", win_ok, "f'(x)|x|^(1-rho) bounded near 0")

    gx = np.linspace(-1, 1, 201)
    gx = gx[gx != 0]
    X, Y = np.meshgrid(gx, np.linspace(-1, 1, 201))
    gy_max = float(np.max(np.abs(dg_dy(X, Y, p))))
    gx_max = float(np.max(np.abs(dg_dx(X, Y, p))))
    rep.add("dg_dy_bound", gy_max <= 0.5 + 1e-15, f"max |dg/dy| = {gy_max:.6g}")
    rep.add("dg_dx_bound", gx_max <= p.M + 1e-15, f"max |dg/dx| = {gx_max:.6g}, M = {p.M}")
    rep.add("alpha_M", p.alpha * p.M < 0.5, f"alpha*M = {p.alpha * p.M:.6g} < 1/2")

    ys = np.linspace(-1, 1, 11)
    crit = (np.allclose(g_eval(np.full_like(ys, -1e-300), ys, p), p.y_plus)
            and np.allclose(g_eval(np.full_like(ys, 1e-300), ys, p), p.y_minus))
    rep.add("critical_values", crit, "g(0^-, y) = y_plus, g(0^+, y) = y_minus")

    G = g_eval(X, Y, p)
    FX = f_eval(X, p)
    inside = bool(np.all(np.abs(G) < 1) and np.all(np.abs(FX) < 1))
    rep.add("strict_invariance", inside, "F([-1,1]^2) inside (-1,1)^2")

    min_abs = np.inf
    for start in ((-1.0, p.y_minus), (1.0, p.y_plus)):
        x = start[0]
        for _ in range(probe_depth):
            min_abs = min(min_abs, abs(x))
            if abs(x) <= 1e-8:
                break
            x = f_eval(x, p)
    rep.add("non_periodic_critical_orbit", min_abs > 1e-8,
            f"min |x| along post-critical orbits (depth {probe_depth}) = {min_abs:.3g}")
    return rep


# ---------------------------------------------------------------- config

_PARAM_KEYS = {f.name for f in fields(MapParams)}


def params_from_mapping(values: dict) -> MapParams:
    kw = {}
    for key, raw in values.items():
        if key not in _PARAM_KEYS:
            raise KeyError(f"unknown map key {key!r}")
        kw[key] = raw if key == "formula" else float(raw)
    formula = kw.get("formula", "default")
    if formula != "default":
        raise ValueError(f"unknown formula {formula!r}; only 'default' is available")
    return MapParams(**kw)


def load_params(text: str, section: str = "map") -> MapParams:
    """Parse key = value text (optionally inside a ``[map]`` section)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep "M" distinct
    if not text.lstrip().startswith("["):
        text = f"[{section}]\n" + text
    cp.read_string(text)
    if not cp.has_section(section):
        return DEFAULT_PARAMS
    return params_from_mapping(dict(cp.items(section)))
