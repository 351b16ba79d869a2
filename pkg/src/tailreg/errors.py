"""Exception hierarchy shared by all tailreg modules."""


class TailregError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(TailregError, ValueError):
    """An input violates a documented precondition."""


class NoDataError(PreconditionError):
    """An operation was left with no usable data (e.g. empty truncation set)."""


class UnsupportedDesignError(PreconditionError):
    """Requested covariate design is outside the supported family."""


class UnsupportedDimensionError(PreconditionError):
    """Dimension exceeds what the (exact or approximate) solver supports."""


class RankDeficientError(PreconditionError):
    """Constraint matrix does not have full row rank."""


class InfeasibleMatchingError(TailregError):
    """Distributions cannot be matched at the requested contamination level."""


class InfeasibleParametersError(TailregError):
    """Hard-instance parameters leave no valid construction (budget > 1)."""


class ConstructionError(TailregError):
    """A constructive procedure produced an object violating its contract."""


class ConvergenceError(TailregError):
    """Iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(TailregError):
    """Malformed experiment configuration."""
