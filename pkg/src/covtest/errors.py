"""Exception hierarchy for covtest."""


class CovTestError(Exception):
    """Base class for all errors raised by covtest."""


class NonTriangularLength(CovTestError, ValueError):
    pass


class EmptyList(CovTestError, ValueError):
    pass


class NoConvergence(CovTestError, ArithmeticError):
    pass


class NotPSD(CovTestError, ValueError):
    pass


class TooFewObservations(CovTestError, ValueError):
    pass


class GroupTooSmall(TooFewObservations):
    pass


class DimensionMismatch(CovTestError, ValueError):
    pass


class BadGroupCount(CovTestError, ValueError):
    pass


class BadDimension(CovTestError, ValueError):
    pass


class NonFinite(CovTestError, ValueError):
    pass


class ZeroTrace(CovTestError, ArithmeticError):
    """Raised when tr(C Sigma C^T) vanishes, i.e. the data are degenerate."""


class RankZero(CovTestError, ValueError):
    pass


class NonConvergent(CovTestError, ArithmeticError):
    pass


class ParseError(CovTestError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col
