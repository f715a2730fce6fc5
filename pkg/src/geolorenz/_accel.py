"""Numba switch for the hot kernels.

Set ``GEOLORENZ_NUMBA=0`` before import to force the pure-numpy path.  Both
paths run the same Python source; with numba disabled the decorated
functions are plain Python operating on numpy arrays.
"""

import os

_FLAG = os.environ.get("GEOLORENZ_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by GEOLORENZ_NUMBA")
    from numba import njit as _njit
    from numba import config as _nb_config
    from numba import prange

    # skip the TBB probe (an old system TBB only triggers a warning)
    _nb_config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:
    _njit = None
    prange = range
    HAVE_NUMBA = False


def jit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(cache=True)(func)
    return func


def jit_parallel(func):
    """Like ``jit`` but with ``parallel=True`` so ``prange`` loops use threads."""
    if HAVE_NUMBA:
        return _njit(cache=True, parallel=True)(func)
    return func


def set_threads(n):
    """Cap the numba thread pool; results never depend on it."""
    if HAVE_NUMBA and n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
