"""Numerical toolkit for a geometric Lorenz map: cones, unstable leaves,
mille-feuilles return branches and the induced thermodynamic formalism."""

from ._accel import HAVE_NUMBA, backend_name, set_threads
from .errors import GeoLorenzError
from .lorenz_map import DEFAULT_PARAMS, MapParams
from .thermo import CaseReport, Potential

__version__ = "0.1.0"

__all__ = ["HAVE_NUMBA", "backend_name", "set_threads", "GeoLorenzError", "DEFAULT_PARAMS",
           "MapParams", "CaseReport", "Potential", "__version__"]
