"""Induced potential, transfer operator L_Z, spectral data, Z_c, pressure and cases.

The potential family is A0(x, y) = c0 + a |x|^h + b y.  The coboundary
series is taken as

    omega(x, y) = sum_k A0(F^k(x, ref(x))) - A0(F^k(x, y)),

so that S_n A0 = A + omega o Phi - omega with A(x) = S_n A0(x, y0) - omega(Phi(x, y0)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from . import kernels
from . import lorenz_map as lm
from .errors import BracketError, ConvergenceError, GeoLorenzError
from .millefeuille import MilleFeuilles, ReturnBranch

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
RESIDUAL_TOL = 1e-8
CASE_THRESHOLD = 2.0
APPROACH = (1e-4, 1e-3)


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class Potential:
    """A0(x, y) = c0 + a |x|^h + b y."""

    c0: float = 0.0
    a: float = 0.0
    h: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError("h must lie in (0, 1]")

    def __call__(self, x, y):
        v = self.c0 + self.b * np.asarray(y, dtype=float)
        if self.a:
            v = v + self.a * np.abs(x) ** self.h
        return v

    @property
    def coeffs(self) -> tuple:
        return (self.c0, self.a, self.h, self.b)

    @property
    def holder_exponent(self) -> float:
        return self.h if self.a else 1.0

    @property
    def holder_constant(self) -> float:
        """Constant for |A0(p) - A0(q)| <= C |p - q|^theta on the square."""
        th = self.holder_exponent
        # |y - y'| <= dist <= diam^(1-theta) dist^theta, diam = 2 sqrt 2
        return abs(self.a) + abs(self.b) * (2.0 * math.sqrt(2.0)) ** (1.0 - th)

    @property
    def vertical_constant(self) -> float:
        return abs(self.b)

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0 and self.a == 0 and self.b == 0

    def shifted(self, c: float) -> "Potential":
        return Potential(self.c0 + c, self.a, self.h, self.b)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, c: float):
        return cls(c0=float(c))

    @classmethod
    def family(cls, a: float, h: float, b: float, c0: float = 0.0):
        return cls(float(c0), float(a), float(h), float(b))

    def describe(self) -> str:
        return f"{self.c0:g} + {self.a:g}*|x|^{self.h:g} + {self.b:g}*y"


TEST_POTENTIAL = Potential.family(a=0.2, h=0.5, b=0.3)


def omega_depth(A0: Potential, tol: float) -> int:
    """Terms needed so the omega tail is below tol.

    Only the y-dependence survives in each term (both points share x), and
    the vertical gap after k steps is at most 2 * 2^-k, so the tail after J
    terms is at most 4 |b| 2^-J.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = A0.vertical_constant
    if b == 0:
        return 0
    return max(1, math.ceil(math.log2(4.0 * b / tol)))


def omega(p, mf: MilleFeuilles, A0: Potential, tol: float = DEFAULT_TOL) -> float:
    """Truncated coboundary series at p = (x, y); zero on the reference leaf."""
    x, y = float(p[0]), float(p[1])
    J = omega_depth(A0, tol)
    if J == 0:
        return 0.0
    yref = mf.reference_y(x)
    X, Y = kernels.forward_orbits([x, x], [yref, y], J, mf.params.kernel_args)
    return float(np.sum(A0(X[0], Y[0]) - A0(X[1], Y[1])))


# ---------------------------------------------------------------- induced table

@dataclass
class InducedPotentialTable:
    grid: np.ndarray
    A: np.ndarray            # (B, G) induced potential at the branch preimages of the grid
    xi: np.ndarray           # (B, G) those preimages
    lengths: np.ndarray
    periodic_x: np.ndarray   # phi-fixed point of each branch
    A_periodic: np.ndarray
    potential: Potential
    truncation_tol: float
    omega_terms: int
    delta_hat: float
    C_A: float = math.nan
    gamma: float = math.nan
    metric_orbits: np.ndarray = field(default=None, repr=False)

    @property
    def n_branches(self) -> int:
        return self.A.shape[0]

    @property
    def N_max(self) -> int:
        return int(self.lengths.max()) if len(self.lengths) else 0

    def shifted(self, c: float) -> "InducedPotentialTable":
        """Table of A0 + c; the correction series is unchanged, A gains c n_i."""
        out = InducedPotentialTable(self.grid, self.A + c * self.lengths[:, None], self.xi,
                                    self.lengths, self.periodic_x,
                                    self.A_periodic + c * self.lengths, self.potential.shifted(c),
                                    self.truncation_tol, self.omega_terms, self.delta_hat,
                                    self.C_A, self.gamma, self.metric_orbits)
        return out


def _induced(mf: MilleFeuilles, A0: Potential, targets, tidx, J):
    kargs = mf.params.kernel_args
    yref = mf.reference_y(targets)
    X, Y = kernels.forward_orbits(targets, yref, J, kargs)
    return kernels.induced_table(targets, X, Y, tidx, mf.syms, mf.lengths, mf.ref_back,
                                 mf.ref_y_start, kargs, A0.coeffs)


def induced_potential_table(mf: MilleFeuilles, A0: Potential, grid_size: int = 2048,
                            tol: float = DEFAULT_TOL, metric_depth: int = 64) -> InducedPotentialTable:
    band = mf.band
    grid = np.linspace(band.P_l, band.P_r, grid_size)
    J = omega_depth(A0, tol)
    tidx = np.arange(grid_size, dtype=np.int64)[None, :]
    A, xi, _ = _induced(mf, A0, grid, tidx, J)
    mid = 0.5 * (band.P_l + band.P_r)
    M = kernels.branch_fixed_points(mf.syms, mf.lengths, mid, mf.params.kernel_args)
    A_M, _, _ = _induced(mf, A0, M, np.arange(len(M), dtype=np.int64)[:, None], J)
    Xm, _ = kernels.forward_orbits(grid, np.zeros(grid_size), metric_depth, mf.params.kernel_args)
    return InducedPotentialTable(grid, A, xi, mf.lengths.copy(), M, A_M[:, 0], A0, tol, J,
                                 band.delta_hat, metric_orbits=Xm)


def induced_potential(x: float, branch: ReturnBranch, mf: MilleFeuilles, A0: Potential,
                      tol: float = DEFAULT_TOL) -> float:
    """A(x) for x in K_i, evaluated through the stable inverse chain from phi(x)."""
    if not branch.K_left - 1e-12 <= x <= branch.K_right + 1e-12:
        raise GeoLorenzError("x is not in the branch domain")
    target = branch.forward(x, mf.params)
    target = min(max(target, mf.band.P_l), mf.band.P_r)
    J = omega_depth(A0, tol)
    kargs = mf.params.kernel_args
    yref = mf.reference_y([target])
    X, Y = kernels.forward_orbits([target], yref, J, kargs)
    syms = kernels.encode(branch.word)[None, :]
    A, _, _ = kernels.induced_table([target], X, Y, np.zeros((1, 1), dtype=np.int64), syms,
                                    np.array([branch.return_time]), mf.ref_back, mf.ref_y_start,
                                    kargs, A0.coeffs)
    return float(A[0, 0])


def birkhoff_sum(p, n: int, A0: Potential, params=lm.DEFAULT_PARAMS) -> float:
    orb = lm.forward_orbit(p, n - 1, params) if n else np.empty((0, 2))
    return float(np.sum(A0(orb[:, 0], orb[:, 1])))


def coboundary_residual(x: float, y: float, branch: ReturnBranch, mf: MilleFeuilles,
                        A0: Potential, tol: float = DEFAULT_TOL) -> float:
    """|S_n A0(x, y) - A(x) - omega(Phi(x, y)) + omega(x, y)|."""
    p = (x, y)
    S = birkhoff_sum(p, branch.return_time, A0, mf.params)
    A = induced_potential(x, branch, mf, A0, tol)
    Phi = lm.forward_orbit(p, branch.return_time, mf.params)[-1]
    return abs(S - A - omega(Phi, mf, A0, tol) + omega(p, mf, A0, tol))


# ---------------------------------------------------------------- metric on the grid

def grid_metric(table: InducedPotentialTable, g1, g2) -> np.ndarray:
    """Symbolic metric between grid nodes (arrays of indices), from stored orbits."""
    X = table.metric_orbits
    close = np.abs(X[g1] - X[g2]) <= table.delta_hat
    # m = number of leading k with all iterates close, minus one
    lead = np.cumprod(close, axis=1).sum(axis=1)
    m = np.maximum(lead - 1, 0)
    d = 2.0 ** (-m.astype(float))
    d[np.asarray(g1) == np.asarray(g2)] = 0.0
    return d


@dataclass(frozen=True)
class HolderEstimate:
    gamma_hat: float
    C_A_hat: float
    pairs: int
    argmax: tuple


def holder_constants_estimate(table: InducedPotentialTable, pairs_per_branch: int = 24,
                              max_branches: int = 400, seed: int = 0) -> HolderEstimate:
    """Fit |A(x) - A(x')| <= C_A d(phi x, phi x')^gamma over same-branch pairs.

    gamma_hat is the slope of the per-level upper envelope of log|dA|
    against log d, clipped to (0, 1]; C_A_hat is the sup quotient at gamma_hat.
    Stores both on the table.
    """
    rng = np.random.default_rng(seed)
    B, G = table.A.shape
    rows = np.arange(B)
    if B > max_branches:
        rows = np.sort(rng.choice(B, max_branches, replace=False))
    bi = np.repeat(rows, pairs_per_branch)
    g1 = rng.integers(0, G, size=bi.size)
    g2 = rng.integers(0, G, size=bi.size)
    keep = g1 != g2
    bi, g1, g2 = bi[keep], g1[keep], g2[keep]
    if bi.size < 50:
        raise GeoLorenzError("insufficient samples for the Hoelder fit")
    d = grid_metric(table, g1, g2)
    dA = np.abs(table.A[bi, g1] - table.A[bi, g2])
    if not np.any(dA > 0):
        est = HolderEstimate(1.0, 0.0, int(bi.size), (-1, -1, -1))
    else:
        levels = -np.log2(d)
        env_x, env_y = [], []
        for m in np.unique(levels):
            sel = (levels == m) & (dA > 0)
            if sel.any():
                env_x.append(-m * math.log(2.0))
                env_y.append(math.log(dA[sel].max()))
        if len(env_x) >= 2:
            gamma = float(np.clip(np.polyfit(env_x, env_y, 1)[0], 1e-3, 1.0))
        else:
            gamma = 1.0
        q = dA / d ** gamma
        k = int(np.argmax(q))
        est = HolderEstimate(gamma, float(q[k]), int(bi.size), (int(bi[k]), int(g1[k]), int(g2[k])))
    table.C_A = est.C_A_hat
    table.gamma = est.gamma_hat
    return est


# ---------------------------------------------------------------- transfer operator

class TransferOperator:
    """L_Z psi(x) = sum_i exp(A(xi_i(x)) - n_i Z) psi(xi_i(x)) on the grid,
    with psi at xi_i(x) linearly interpolated between nodes."""

    def __init__(self, table: InducedPotentialTable):
        self.table = table
        grid = table.grid
        G = len(grid)
        B = table.n_branches
        h = (grid[-1] - grid[0]) / (G - 1)
        u = (table.xi - grid[0]) / h
        j = np.clip(np.floor(u).astype(np.int64), 0, G - 2)
        t = np.clip(u - j, 0.0, 1.0)
        w = np.exp(table.A)
        rows = np.broadcast_to(np.arange(G), (B, G))
        br = np.broadcast_to(np.arange(B)[:, None], (B, G))
        # two entries per (branch, node), ordered row-major by node for CSR
        order = np.argsort(rows.ravel(), kind="stable")
        r = rows.ravel()[order]
        self.G, self.B = G, B
        self.cols = np.concatenate([j.ravel()[order], j.ravel()[order] + 1])
        self.base = np.concatenate([(w * (1 - t)).ravel()[order], (w * t).ravel()[order]])
        self.branch = np.concatenate([br.ravel()[order], br.ravel()[order]])
        self.rows = np.concatenate([r, r])
        perm = np.argsort(self.rows, kind="stable")
        self.rows, self.cols = self.rows[perm], self.cols[perm].astype(np.int32)
        self.base, self.branch = self.base[perm], self.branch[perm].astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.rows, minlength=G))])
        self.ntimes = table.lengths[self.branch]
        self.times = np.unique(table.lengths)
        self._time_index = np.searchsorted(self.times, self.ntimes)

    def data(self, Z: float) -> np.ndarray:
        fac = np.exp(-self.times * Z)
        return self.base * fac[self._time_index]

    def matrix(self, Z: float) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.data(Z), self.cols, self.indptr), shape=(self.G, self.G))

    def apply(self, Z: float, psi) -> np.ndarray:
        return self.matrix(Z) @ np.asarray(psi, dtype=float)

    def row_constant(self, Z: float) -> float:
        """sum_i exp(-n_i Z), the closed form of L_Z(1) when A = 0."""
        counts = np.bincount(self.table.lengths)
        n = np.nonzero(counts)[0]
        return float(np.sum(counts[n] * np.exp(-n * Z)))


def transfer_apply(Z: float, psi, op: TransferOperator, zc: "ZcEstimate | None" = None):
    """L_Z psi on the grid, plus a bound for the truncated branches when a
    Z_c estimate is supplied (returned as a pair in that case)."""
    if zc is not None and Z <= zc.Zc_hat:
        log.warning("Z = %.6g is not above the Z_c estimate %.6g", Z, zc.Zc_hat)
    out = op.apply(Z, psi)
    if zc is None:
        return out
    return out, tail_bound(Z, zc) * float(np.max(np.abs(psi)))


@dataclass
class SpectralData:
    Z: float
    lam: float
    H: np.ndarray
    nu: np.ndarray
    residual: float
    power_iter_rate: float
    iterations: int
    interp_error: float = 0.0

    @property
    def log_lambda(self) -> float:
        return math.log(self.lam)

    @property
    def mu(self) -> np.ndarray:
        m = self.H * self.nu
        return m / m.sum()


def spectral_solve(Z: float, op: TransferOperator, max_iter: int = 2000,
                   tol: float = 1e-13, H0=None, nu0=None,
                   residual_tol: float = RESIDUAL_TOL) -> SpectralData:
    """Leading eigen-triple of the discretised L_Z by power iteration.

    lambda is the sup-norm ratio, H is normalised to min 1, nu (left
    eigenvector) to total mass 1.
    """
    L = op.matrix(Z)
    H = np.ones(op.G) if H0 is None else np.array(H0, dtype=float)
    lam_prev, step_prev, rate = math.nan, math.nan, 0.0
    resid = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        v = L @ H
        lam = float(np.max(v) / np.max(H))
        resid = float(np.max(np.abs(v - lam * H)) / np.max(np.abs(H)) / lam)
        H_new = v / lam
        step = float(np.max(np.abs(H_new - H)))
        if step_prev > 0 and step > 0:
            rate = step / step_prev
        step_prev = step
        H = H_new / H_new.min()
        if resid <= tol:
            break
    if resid > residual_tol:
        raise ConvergenceError(f"power iteration did not converge at Z={Z}", resid)
    LT = L.T.tocsr()
    nu = np.full(op.G, 1.0 / op.G) if nu0 is None else np.array(nu0, dtype=float)
    for _ in range(max_iter):
        w = LT @ nu
        w /= w.sum()
        if np.sum(np.abs(w - nu)) < 1e-14:
            nu = w
            break
        nu = w
    v = L @ H
    lam = float(nu @ v / (nu @ H))
    resid = float(np.max(np.abs(v - lam * H)) / np.max(np.abs(H)) / lam)
    if resid > residual_tol:
        raise ConvergenceError(f"eigen-residual {resid:.3g} above {residual_tol}", resid)
    d2 = np.abs(H[2:] - 2 * H[1:-1] + H[:-2])
    interp = float(lam * d2.max() / 8.0 / H.min()) if len(d2) else 0.0
    return SpectralData(Z, lam, H, nu, resid, rate, it, interp)


def iterate_ones(Z: float, op: TransferOperator, n: int) -> list:
    """[L_Z^k(1) for k = 1..n]."""
    L = op.matrix(Z)
    out, v = [], np.ones(op.G)
    for _ in range(n):
        v = L @ v
        out.append(v.copy())
    return out


# ---------------------------------------------------------------- Kac integrals

@dataclass(frozen=True)
class KacData:
    tau_mean: float
    m_Z_mass: float
    time_masses: dict
    branch_masses: np.ndarray
    tail_bound: float


def kac_integrals(Z: float, sd: SpectralData, op: TransferOperator,
                  zc=None) -> KacData:
    """Return-time masses mu_Z(tau = n) and tau_mean = sum_i n_i mu_Z(K_i)."""
    contrib = sd.nu[op.rows] * op.data(Z) * sd.H[op.cols]
    norm = sd.lam * float(sd.nu @ sd.H)
    bm = np.bincount(op.branch, weights=contrib, minlength=op.B) / norm
    tm = np.bincount(op.table.lengths, weights=bm)
    times = {int(n): float(tm[n]) for n in np.nonzero(tm)[0]}
    tau = float(np.sum(op.table.lengths * bm))
    tail = tail_bound(Z, zc) if zc is not None else math.nan
    return KacData(tau, 1.0 / tau, times, bm, tail)


def free_energy(Z: float, sd: SpectralData, kac: KacData) -> float:
    """Z + m_Z(M0) log lambda_Z."""
    return Z + kac.m_Z_mass * math.log(sd.lam)


def duality_pressure(Z: float, sd: SpectralData, kac: KacData) -> float:
    """h + int A0 dm_Z + beta m_Z(M0) with beta = -log lambda_Z; equals Z."""
    beta = -math.log(sd.lam)
    return free_energy(Z, sd, kac) + beta * kac.m_Z_mass


# ---------------------------------------------------------------- Z_c

@dataclass
class ZcEstimate:
    Zc_hat: float
    a_n: dict
    ratios: dict
    window: tuple
    slope: float
    intercept: float
    fit_tolerance: float
    C_A: float

    def a_hat(self, n):
        return self.intercept + self.slope * np.asarray(n, dtype=float)


def _level_logsums(lengths, values) -> dict:
    out = {}
    for n in np.unique(lengths):
        out[int(n)] = float(logsumexp(values[lengths == n]))
    return out


def Zc_estimate(table: InducedPotentialTable) -> ZcEstimate:
    """a_n = log sum_{n_i = n} exp(A(M_{n,i})); Z_c estimate is the max of
    a_n / n over the window [N_max/2, N_max].  A least-squares line through
    the same window feeds the tail extrapolation."""
    a = _level_logsums(table.lengths, table.A_periodic)
    N = table.N_max
    lo = max(1, math.ceil(N / 2))
    win = [n for n in sorted(a) if lo <= n <= N]
    if not win:
        raise GeoLorenzError("no branches in the Z_c window")
    ratios = {n: a[n] / n for n in sorted(a)}
    zc = max(ratios[n] for n in win)
    if len(win) >= 2:
        slope, intercept = np.polyfit(win, [a[n] for n in win], 1)
    else:
        slope, intercept = ratios[win[0]], 0.0
    C_A = table.C_A if math.isfinite(table.C_A) else 0.0
    return ZcEstimate(float(zc), a, ratios, (lo, N), float(slope), float(intercept),
                      max(C_A / lo, 1e-9), C_A)


def bernoulli_lower_bound(n: int, table: InducedPotentialTable) -> float:
    """(1/n) log sum_j exp(A_{n,j}), A_{n,j} taken at the preimage of the band
    midpoint under each branch of time n."""
    sel = table.lengths == n
    if not sel.any():
        raise GeoLorenzError(f"no branches with return time {n}")
    mid = len(table.grid) // 2
    return float(logsumexp(table.A[sel, mid]) / n)


def tail_bound(Z: float, zc: ZcEstimate) -> float:
    """e^{C_A} sum_{n > N} exp(a_hat(n) - n Z) using the fitted line; inf
    when Z does not exceed the fitted growth rate."""
    r = zc.slope - Z
    if r >= 0:
        return math.inf
    N = zc.window[1]
    first = zc.intercept + r * (N + 1)
    return float(math.exp(zc.C_A + first) / -math.expm1(r))


# ---------------------------------------------------------------- pressure root and cases

@dataclass
class CaseReport:
    Z_c_estimate: float
    pressure_root: float | None
    kac_integral_at_root: float | None
    case: int
    free_energy: float
    confidence: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "Z_c_estimate": self.Z_c_estimate,
            "pressure_root": self.pressure_root,
            "kac_integral_at_root": self.kac_integral_at_root,
            "case": self.case,
            "free_energy": self.free_energy,
            "confidence": self.confidence,
            "details": self.details,
        }


class SpectralCache:
    """Memoised spectral solves with warm starts from the nearest solved Z."""

    def __init__(self, op: TransferOperator, residual_tol: float = RESIDUAL_TOL):
        self.op = op
        self.residual_tol = residual_tol
        self.solved = {}

    def __call__(self, Z: float) -> SpectralData:
        Z = float(Z)
        if Z not in self.solved:
            self.solved[Z] = spectral_solve(Z, self.op, residual_tol=self.residual_tol)
        return self.solved[Z]


def find_root(solve, lo: float, hi: float, tol: float = 1e-14, max_iter: int = 200):
    """Root of the decreasing function log lambda_Z in [lo, hi].

    Newton steps use d log lambda / dZ = -tau_mean and are accepted only
    inside the current bracket; otherwise the bracket is bisected.
    """
    f_lo = solve(lo).log_lambda
    f_hi = solve(hi).log_lambda
    if not (f_lo > 0 > f_hi):
        raise BracketError(f"no sign change of log lambda on [{lo}, {hi}]; widen bracket")
    Z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        sd = solve(Z)
        f = sd.log_lambda
        if f == 0.0 or abs(sd.lam - 1.0) < 1e-15:
            return Z
        if f > 0:
            lo = Z
        else:
            hi = Z
        if hi - lo < tol:
            break
        tau = kac_integrals(Z, sd, solve.op).tau_mean
        Z_new = Z + f / tau
        if not lo < Z_new < hi:
            Z_new = 0.5 * (lo + hi)
        if Z_new == Z:
            break
        Z = Z_new
    return Z


def auto_bracket(solve, start: float, width: float = 1.0, tries: int = 30):
    lo, hi = start, start + width
    for _ in range(tries):
        if solve(lo).log_lambda <= 0:
            lo -= width
            width *= 2
            continue
        if solve(hi).log_lambda >= 0:
            hi += width
            width *= 2
            continue
        return lo, hi
    raise BracketError("could not bracket log lambda = 0; widen bracket")


def classify(Zc: float, root: float | None, tau_at, fit_tol: float,
             approach=APPROACH, threshold: float = CASE_THRESHOLD):
    """Case label from the root position and the Kac integral growth near Z_c.

    ``tau_at(Z)`` returns int tau dmu_Z.  Returns (case, confidence, info).
    """
    if root is not None and root > Zc + fit_tol:
        margin = root - Zc
        return 1, ("high" if margin > 10 * fit_tol else "low"), {"margin": margin}
    near, far = approach
    t_near, t_far = tau_at(Zc + near), tau_at(Zc + far)
    growth = t_near / t_far
    case = 3 if growth > threshold else 2
    return case, "low", {"tau_near": t_near, "tau_far": t_far, "tau_growth": growth}


@dataclass
class PressureRoot:
    root: float
    spectral: SpectralData
    kac: KacData
    bracket: tuple
    truncation_tolerance: float
    zc: ZcEstimate

    def to_dict(self) -> dict:
        return {
            "pressure_root": self.root,
            "lambda_at_root": self.spectral.lam,
            "log_lambda_at_root": self.spectral.log_lambda,
            "residual": self.spectral.residual,
            "tau_mean": self.kac.tau_mean,
            "m_Z_mass": self.kac.m_Z_mass,
            "tail_bound_at_root": self.kac.tail_bound,
            "root_truncation_tolerance": self.truncation_tolerance,
            "bracket": list(self.bracket),
            "interp_error": self.spectral.interp_error,
            "power_iter_rate": self.spectral.power_iter_rate,
        }


def pressure_root(op: TransferOperator, table: InducedPotentialTable, Z_bracket=None,
                  zc: ZcEstimate | None = None, residual_tol: float = RESIDUAL_TOL,
                  xtol: float = 1e-14, solve: SpectralCache | None = None) -> PressureRoot:
    """Z* with lambda_{Z*} = 1; the bracket defaults to one grown from Z_c."""
    zc = zc or Zc_estimate(table)
    solve = solve or SpectralCache(op, residual_tol)
    if Z_bracket is None:
        Z_bracket = auto_bracket(solve, zc.Zc_hat)
    lo, hi = Z_bracket
    if not lo < hi:
        raise BracketError("degenerate Z bracket")
    root = find_root(solve, lo, hi, tol=xtol)
    sd = solve(root)
    if abs(sd.lam - 1.0) >= RESIDUAL_TOL:
        raise ConvergenceError(f"|lambda - 1| = {abs(sd.lam - 1):.3g} at the root", sd.residual)
    kac = kac_integrals(root, sd, op, zc)
    return PressureRoot(root, sd, kac, (lo, hi), truncation_shift(solve, root, zc), zc)


def classify_root(pr: PressureRoot, op: TransferOperator, table: InducedPotentialTable,
                  solve: SpectralCache | None = None) -> CaseReport:
    zc = pr.zc
    solve = solve or SpectralCache(op)

    def tau_at(Z):
        return kac_integrals(Z, solve(Z), op).tau_mean

    case, conf, info = classify(zc.Zc_hat, pr.root, tau_at, zc.fit_tolerance)
    fe = free_energy(pr.root, pr.spectral, pr.kac) if case in (1, 2) else zc.Zc_hat
    details = {
        **pr.to_dict(),
        "Zc_slope": zc.slope,
        "Zc_fit_tolerance": zc.fit_tolerance,
        "Zc_window": list(zc.window),
        "a_n_over_n": {str(k): v for k, v in zc.ratios.items()},
        "C_A": table.C_A,
        "gamma": table.gamma,
        "branch_count": table.n_branches,
        "N_max": table.N_max,
        "grid_size": len(table.grid),
        "omega_tol": table.truncation_tol,
        **info,
    }
    details.pop("pressure_root")
    details.pop("tau_mean")
    return CaseReport(zc.Zc_hat, pr.root, pr.kac.tau_mean, case, fe, conf, details)


def solve_pressure_root(op: TransferOperator, table: InducedPotentialTable,
                        Z_bracket=None, zc: ZcEstimate | None = None,
                        residual_tol: float = RESIDUAL_TOL, xtol: float = 1e-14) -> CaseReport:
    solve = SpectralCache(op, residual_tol)
    pr = pressure_root(op, table, Z_bracket, zc, residual_tol, xtol, solve)
    return classify_root(pr, op, table, solve)


def truncation_shift(solve, root: float, zc: ZcEstimate) -> float:
    """Shift of the root when the extrapolated tail is added to lambda_Z:
    solves lambda_Z + tail(Z) = 1 above max(root, fitted growth rate)."""
    lo = max(root, zc.slope + 1e-12)

    def total(Z):
        return solve(Z).lam + tail_bound(Z, zc) - 1.0

    if total(lo) <= 0:
        return 0.0
    hi = lo + 0.5
    for _ in range(40):
        if total(hi) < 0:
            break
        hi += 0.5
    else:
        return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if total(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return 0.5 * (lo + hi) - root


# ---------------------------------------------------------------- pressure curve

@dataclass(frozen=True)
class CurvePoint:
    Z: float
    log_lambda: float
    tau_mean: float
    free_energy: float
    residual: float
    tail_bound: float


def pressure_curve(op: TransferOperator, Zs, zc: ZcEstimate | None = None) -> list:
    out = []
    H = None
    for Z in Zs:
        sd = spectral_solve(float(Z), op, H0=H)
        H = sd.H
        kac = kac_integrals(float(Z), sd, op, zc)
        out.append(CurvePoint(float(Z), sd.log_lambda, kac.tau_mean, free_energy(Z, sd, kac),
                              sd.residual, kac.tail_bound))
    return out


# ---------------------------------------------------------------- cross check

@dataclass
class CrossReport:
    root_A: float
    root_B: float
    gap: float
    tolerance: float
    report_A: CaseReport
    report_B: CaseReport

    @property
    def agree(self) -> bool:
        return self.gap <= self.tolerance


def cross_millefeuille_pressure(mfA: MilleFeuilles, mfB: MilleFeuilles, A0: Potential,
                                grid_size: int = 512, tol: float = DEFAULT_TOL) -> CrossReport:
    reps = []
    for mf in (mfA, mfB):
        table = induced_potential_table(mf, A0, grid_size, tol)
        if not A0.is_zero:
            holder_constants_estimate(table)
        else:
            table.C_A, table.gamma = 0.0, 1.0
        reps.append(solve_pressure_root(TransferOperator(table), table))
    a, b = reps
    tol_ab = (a.details["root_truncation_tolerance"] + b.details["root_truncation_tolerance"])
    return CrossReport(a.pressure_root, b.pressure_root, abs(a.pressure_root - b.pressure_root),
                       tol_ab, a, b)
