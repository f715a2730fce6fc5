class GeoLorenzError(Exception):
    """Base class for errors raised by this package."""


class BivaluedPointError(GeoLorenzError, ValueError):
    pass


class BranchRangeError(GeoLorenzError, ValueError):
    pass


class InadmissibleWordError(GeoLorenzError, ValueError):
    def __init__(self, message, depth=None):
        super().__init__(message)
        self.depth = depth


class CodeAmbiguousError(GeoLorenzError, ValueError):
    pass


class NoLeafError(GeoLorenzError, RuntimeError):
    pass


class ConvergenceError(GeoLorenzError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(GeoLorenzError, ValueError):
    pass
