"""core/exceptions.py"""

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_NONFINITE = 4
EXIT_VALIDATION = 5


class KeepCloseError(Exception):
    """Base for every error raised by the certification library."""

    exit_code = EXIT_INPUT


# Shapes and values


class DimensionMismatch(KeepCloseError):
    pass


class NonFiniteEntry(KeepCloseError):
    pass


class EmptyList(KeepCloseError):
    pass


class BoundOrder(KeepCloseError):
    pass


class NegativeBound(KeepCloseError):
    pass


class GridMismatch(KeepCloseError):
    pass


class GridTooCoarse(KeepCloseError):
    pass


class DomainExceeded(KeepCloseError):
    pass


# Linear algebra


class EigenFailure(KeepCloseError):
    pass


class SingularFeedthrough(KeepCloseError):
    """I - Lambda D is numerically singular: the algebraic loop is ill-posed."""


class ModelMismatch(KeepCloseError):
    pass


class UnsupportedFeedthrough(KeepCloseError):
    pass


# Controller bounds and training


class VertexExplosion(KeepCloseError):
    pass


class Diverged(KeepCloseError):
    pass


# Certificates


class NonPositiveGamma(KeepCloseError):
    pass


class NonPositiveSigma(KeepCloseError):
    pass


class NonPositiveS(KeepCloseError):
    pass


class SolverUnknown(KeepCloseError):
    """The SDP solver gave no usable answer; callers treat it as infeasible."""


class InfeasibleAtUpper(KeepCloseError):
    exit_code = EXIT_INFEASIBLE

    def __init__(self, message, upper=None, trace=None):
        super().__init__(message)
        self.upper = upper
        self.trace = trace or []


class GammaOutOfRange(KeepCloseError):
    pass


# Simulation


class NonFiniteState(KeepCloseError):
    exit_code = EXIT_NONFINITE

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ZeroDenominator(KeepCloseError):
    pass


# Scenarios


class ScenarioError(KeepCloseError):
    pass


class MassDepleted(KeepCloseError):
    pass


class NoPositiveTgo(KeepCloseError):
    pass


class NonPositiveTgo(KeepCloseError):
    pass


# Validation


class ValidationFailure(KeepCloseError):
    exit_code = EXIT_VALIDATION

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []
