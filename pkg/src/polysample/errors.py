"""Exception hierarchy shared by every module."""


class PolytopeError(Exception):
    """Base class for all errors raised by polysample."""


class DegeneratePolytopeError(PolytopeError):
    pass


class EmptyPolytopeError(PolytopeError):
    pass


class UnboundedPolytopeError(PolytopeError):
    pass


class UnboundedPolytopeWarning(UserWarning):
    pass


class RankDeficiencyError(PolytopeError):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)


class BoundaryError(PolytopeError):
    """Point is on or outside the boundary where a strictly interior point is needed."""


class ConvergenceError(PolytopeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalBreakdownError(PolytopeError):
    pass


class MpsParseError(PolytopeError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PolytopeFormatError(PolytopeError, ValueError):
    """Malformed native polytope file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
