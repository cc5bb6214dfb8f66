"""Exception types raised by the CFOIE library."""


class GeometryError(ValueError):
    pass


class CoincidentPointsError(ValueError):
    pass


class NearSurfaceError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class QuadratureError(RuntimeError):
    """Non-finite matrix entry. Carries the offending row, column and source patch."""

    def __init__(self, msg, row=None, col=None, patch=None):
        super().__init__(msg)
        self.row = row
        self.col = col
        self.patch = patch


class SingularOperatorError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    """GMRES stopped above the requested tolerance. `x` is the last iterate."""

    def __init__(self, msg, x=None, report=None):
        super().__init__(msg)
        self.x = x
        self.report = report


class MatrixFormatError(ValueError):
    """A dumped matrix file that is truncated or not in the CFOM layout."""
    pass
