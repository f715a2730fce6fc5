"""Hot loops: inverse-branch chains, leaf evaluation, induced potential tables.

Symbols are int8 with 0 = L and 1 = R.  A *backward* symbol array lists the
sides of successive preimages: ``back[k]`` is the side of F^-(k+1).

Every public function dispatches to a numba kernel when numba is enabled
(``GEOLORENZ_NUMBA``) and otherwise to a vectorised numpy implementation of
the same arithmetic.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, jit, jit_parallel, prange

RANGE_TOL = 1e-12


def encode(word: str) -> np.ndarray:
    """'LR' string to an int8 symbol array."""
    return np.array([0 if c == "L" else 1 for c in word], dtype=np.int8)


def decode(syms) -> str:
    return "".join("L" if s == 0 else "R" for s in syms)


# ------------------------------------------------------------------ scalars

@jit
def _inv(s, x, rho, v_l, v_r):
    if s == 0:
        u = (1.0 - x) / (1.0 - v_l)
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        return -(u ** (1.0 / rho))
    u = (x + 1.0) / (1.0 + v_r)
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    return u ** (1.0 / rho)


@jit
def _in_range(s, x, v_l, v_r, tol):
    if s == 0:
        return v_l - tol <= x <= 1.0 + tol
    return -1.0 - tol <= x <= v_r + tol


@jit
def _f(x, rho, v_l, v_r):
    if x > 0.0:
        return -1.0 + (1.0 + v_r) * x ** rho
    return 1.0 - (1.0 - v_l) * (-x) ** rho


@jit
def _g(s, x, y, y_plus, y_minus, c):
    base = y_plus if s == 0 else y_minus
    return base + c * abs(x) * y


@jit
def _pot(x, y, c0, a, h, b):
    v = c0 + b * y
    if a != 0.0:
        v += a * abs(x) ** h
    return v


# ------------------------------------------------------------------ leaf values

@jit
def _leaf_values_nb(xs, back, y_start, rho, v_l, v_r, y_plus, y_minus, c, tol):
    n = back.shape[0]
    m = xs.shape[0]
    ys = np.empty(m)
    ok = np.ones(m, dtype=np.bool_)
    chain = np.empty(n + 1)
    for j in range(m):
        t = xs[j]
        chain[0] = t
        for k in range(n):
            if not _in_range(back[k], t, v_l, v_r, tol):
                ok[j] = False
            t = _inv(back[k], t, rho, v_l, v_r)
            chain[k + 1] = t
        y = y_start
        for k in range(n - 1, -1, -1):
            y = _g(back[k], chain[k + 1], y, y_plus, y_minus, c)
        ys[j] = y
    return ys, ok


def _inv_np(s, x, rho, v_l, v_r):
    if s == 0:
        return -np.clip((1.0 - x) / (1.0 - v_l), 0.0, 1.0) ** (1.0 / rho)
    return np.clip((x + 1.0) / (1.0 + v_r), 0.0, 1.0) ** (1.0 / rho)


def _in_range_np(s, x, v_l, v_r, tol):
    if s == 0:
        return (x >= v_l - tol) & (x <= 1.0 + tol)
    return (x >= -1.0 - tol) & (x <= v_r + tol)


def _g_np(s, x, y, y_plus, y_minus, c):
    return (y_plus if s == 0 else y_minus) + c * np.abs(x) * y


def _pot_np(x, y, c0, a, h, b):
    v = c0 + b * y
    if a != 0.0:
        v = v + a * np.abs(x) ** h
    return v


def _leaf_values_np(xs, back, y_start, rho, v_l, v_r, y_plus, y_minus, c, tol):
    t = xs.copy()
    ok = np.ones(len(xs), dtype=bool)
    chain = [t]
    for s in back:
        ok &= _in_range_np(s, t, v_l, v_r, tol)
        t = _inv_np(s, t, rho, v_l, v_r)
        chain.append(t)
    y = np.full(len(xs), float(y_start))
    for k in range(len(back) - 1, -1, -1):
        y = _g_np(back[k], chain[k + 1], y, y_plus, y_minus, c)
    return y, ok


def leaf_values(xs, back, y_start, kargs, tol=RANGE_TOL):
    """y-values of F^n(horizontal line y = y_start at depth n) above xs.

    ``kargs`` is ``MapParams.kernel_args``.  Returns (ys, ok) where ok marks
    samples whose whole chain stayed inside the branch ranges.
    """
    xs = np.ascontiguousarray(xs, dtype=float)
    back = np.ascontiguousarray(back, dtype=np.int8)
    rho, v_l, v_r, y_plus, y_minus, c = kargs
    fn = _leaf_values_nb if HAVE_NUMBA else _leaf_values_np
    return fn(xs, back, float(y_start), rho, v_l, v_r, y_plus, y_minus, c, tol)


# ------------------------------------------------------------------ chains

def pull_chain(xs, back, kargs, tol=RANGE_TOL):
    """All preimages along ``back``: array (len(back)+1, len(xs)) and ok mask."""
    rho, v_l, v_r = kargs[:3]
    t = np.asarray(xs, dtype=float).copy()
    ok = np.ones(t.shape, dtype=bool)
    out = [t]
    for s in back:
        ok &= _in_range_np(int(s), t, v_l, v_r, tol)
        t = _inv_np(int(s), t, rho, v_l, v_r)
        out.append(t)
    return np.array(out), ok


def branch_fixed_points(syms, lengths, x0, kargs, iters=80):
    """Fixed point of each branch inverse (forward symbol rows, padded)."""
    rho, v_l, v_r = kargs[:3]
    B = len(lengths)
    t = np.full(B, float(x0))
    for _ in range(iters):
        for k in range(syms.shape[1] - 1, -1, -1):
            active = k < lengths
            if not active.any():
                continue
            s = syms[:, k]
            left = active & (s == 0)
            right = active & (s == 1)
            t[left] = _inv_np(0, t[left], rho, v_l, v_r)
            t[right] = _inv_np(1, t[right], rho, v_l, v_r)
    return t


# ------------------------------------------------------------------ forward orbits

@jit
def _forward_nb(xs, ys, J, rho, v_l, v_r, y_plus, y_minus, c):
    m = xs.shape[0]
    X = np.empty((m, J))
    Y = np.empty((m, J))
    for j in range(m):
        x = xs[j]
        y = ys[j]
        for k in range(J):
            X[j, k] = x
            Y[j, k] = y
            s = 0 if x < 0.0 else 1
            y = _g(s, x, y, y_plus, y_minus, c)
            if x == 0.0:
                x = 1.0
            else:
                x = _f(x, rho, v_l, v_r)
    return X, Y


def _forward_np(xs, ys, J, rho, v_l, v_r, y_plus, y_minus, c):
    X = np.empty((len(xs), J))
    Y = np.empty((len(xs), J))
    x = xs.copy()
    y = ys.copy()
    for k in range(J):
        X[:, k] = x
        Y[:, k] = y
        left = x < 0.0
        y = np.where(left, y_plus, y_minus) + c * np.abs(x) * y
        fx = np.empty_like(x)
        fx[~left] = -1.0 + (1.0 + v_r) * x[~left] ** rho
        fx[left] = 1.0 - (1.0 - v_l) * (-x[left]) ** rho
        fx[x == 0.0] = 1.0
        x = fx
    return X, Y


def forward_orbits(xs, ys, J, kargs):
    """Forward orbits of (xs, ys), shape (len(xs), J) each, first column = start."""
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    fn = _forward_nb if HAVE_NUMBA else _forward_np
    return fn(xs, ys, int(J), *kargs)


# ------------------------------------------------------------------ induced table

@jit_parallel
def _induced_nb(targets, X, Yref, tidx, syms, lengths, seed_back, y_seed,
                rho, v_l, v_r, y_plus, y_minus, c, c0, a, h, b):
    B = lengths.shape[0]
    K = tidx.shape[1]
    shared = tidx.shape[0] == 1
    J = X.shape[1]
    D = seed_back.shape[0]
    nmax = syms.shape[1]
    A = np.empty((B, K))
    XI = np.empty((B, K))
    YN = np.empty((B, K))
    for i in prange(B):
        n = lengths[i]
        chain = np.empty(nmax + 1)
        schain = np.empty(D + 1)
        for kk in range(K):
            ti = tidx[0, kk] if shared else tidx[i, kk]
            t = targets[ti]
            chain[n] = t
            for k in range(n - 1, -1, -1):
                t = _inv(syms[i, k], t, rho, v_l, v_r)
                chain[k] = t
            xi = t
            # reference-leaf height above xi
            z = xi
            schain[0] = z
            for k in range(D):
                z = _inv(seed_back[k], z, rho, v_l, v_r)
                schain[k + 1] = z
            y = y_seed
            for k in range(D - 1, -1, -1):
                y = _g(seed_back[k], schain[k + 1], y, y_plus, y_minus, c)
            # Birkhoff sum along the branch
            S = 0.0
            for k in range(n):
                S += _pot(chain[k], y, c0, a, h, b)
                y = _g(syms[i, k], chain[k], y, y_plus, y_minus, c)
            # correction: sum_j A0(F^j(x, ref)) - A0(F^j(x, y_n))
            corr = 0.0
            yy = y
            for j in range(J):
                x = X[ti, j]
                corr += _pot(x, Yref[ti, j], c0, a, h, b) - _pot(x, yy, c0, a, h, b)
                s = 0 if x < 0.0 else 1
                yy = _g(s, x, yy, y_plus, y_minus, c)
            A[i, kk] = S - corr
            XI[i, kk] = xi
            YN[i, kk] = y
    return A, XI, YN


def _induced_np(targets, X, Yref, tidx, syms, lengths, seed_back, y_seed,
                rho, v_l, v_r, y_plus, y_minus, c, c0, a, h, b):
    B = len(lengths)
    K = tidx.shape[1]
    J = X.shape[1]
    A = np.empty((B, K))
    XI = np.empty((B, K))
    YN = np.empty((B, K))
    for i in range(B):
        n = int(lengths[i])
        idx = tidx[0] if tidx.shape[0] == 1 else tidx[i]
        t = targets[idx].astype(float)
        chain = [None] * (n + 1)
        chain[n] = t
        for k in range(n - 1, -1, -1):
            t = _inv_np(syms[i, k], t, rho, v_l, v_r)
            chain[k] = t
        xi = t
        y, _ = _leaf_values_np(xi, seed_back, y_seed, rho, v_l, v_r, y_plus, y_minus, c, np.inf)
        S = np.zeros(K)
        for k in range(n):
            S += _pot_np(chain[k], y, c0, a, h, b)
            y = _g_np(syms[i, k], chain[k], y, y_plus, y_minus, c)
        corr = np.zeros(K)
        yy = y
        for j in range(J):
            x = X[idx, j]
            corr += _pot_np(x, Yref[idx, j], c0, a, h, b) - _pot_np(x, yy, c0, a, h, b)
            yy = np.where(x < 0.0, y_plus, y_minus) + c * np.abs(x) * yy
        A[i] = S - corr
        XI[i] = xi
        YN[i] = y
    return A, XI, YN


def induced_table(targets, X, Yref, tidx, syms, lengths, seed_back, y_seed, kargs, pot):
    """Induced potential A and preimages for every (branch, target) pair.

    ``syms`` holds forward branch words row-wise (padded), ``tidx[i, k]`` the
    index of the k-th target used with branch i, and (X, Yref) the forward
    orbits of the targets started on the reference leaf.  A single row in
    ``tidx`` is shared by all branches.  ``pot`` is
    (c0, a, h, b).  Returns (A, xi, y_n) with y_n the height reached at the
    target after the return.
    """
    args = (np.ascontiguousarray(targets, dtype=float), np.ascontiguousarray(X),
            np.ascontiguousarray(Yref), np.ascontiguousarray(tidx, dtype=np.int64),
            np.ascontiguousarray(syms, dtype=np.int8),
            np.ascontiguousarray(lengths, dtype=np.int64),
            np.ascontiguousarray(seed_back, dtype=np.int8), float(y_seed))
    fn = _induced_nb if HAVE_NUMBA else _induced_np
    return fn(*args, *kargs, *[float(v) for v in pot])
