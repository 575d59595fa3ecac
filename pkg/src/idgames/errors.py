"""Exception types shared across the package."""


class IdgError(Exception):
    """Base class for all package errors."""


class NonFiniteState(IdgError):
    """A trajectory or matrix sweep produced NaN/Inf entries."""

    def __init__(self, msg, step=None, time=None):
        super().__init__(msg)
        self.step = step
        self.time = time


class NotSymmetric(IdgError):
    pass


class SingularMatrix(IdgError):
    pass


class OutOfRange(IdgError):
    pass


class DegenerateGeometry(IdgError):
    pass


class NonFinite(IdgError):
    pass


class NoConvergence(IdgError):
    """No shooting start converged for the requested parameter vector."""


class NoConvergedCandidate(IdgError):
    pass


class NotApplicable(IdgError):
    pass


class UnboundedOrDegenerate(IdgError):
    pass


class InfeasibleConstraints(IdgError):
    pass


class DegenerateNormalizer(IdgError):
    pass


class InfeasibleStart(IdgError):
    pass


class TooFewSamples(IdgError):
    pass


class ParseError(IdgError):
    """Malformed input file; message carries line/field diagnostics."""
