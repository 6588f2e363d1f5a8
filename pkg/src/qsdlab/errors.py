"""Exception types shared across the package."""


class QsdLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(QsdLabError):
    """Operands live in Hilbert spaces of different dimension."""


class NotNormalizedError(QsdLabError):
    """An operation that requires a unit-norm state received something else."""


class IntegrationDivergedError(QsdLabError):
    """A deterministic integration left the admissible set beyond tolerance."""


class StepFailureError(QsdLabError):
    """A stochastic step produced a vector too short to renormalize."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class BracketingError(QsdLabError):
    """Root bracketing failed: no sign change across the given interval."""


class DegenerateFieldError(QsdLabError):
    """A scalar field is (numerically) constant, so extrema are meaningless."""


class ExperimentIllPosedError(QsdLabError):
    """A path-statistics experiment cannot be set up from the given field."""


class NotApplicableError(QsdLabError):
    """The requested check is only defined for a restricted operator class."""
