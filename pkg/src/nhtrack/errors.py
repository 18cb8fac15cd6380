"""Exception types shared across the package."""


class NhtrackError(Exception):
    """Base class for all package errors."""


class ContractError(NhtrackError):
    """A precondition was violated (dimension mismatch, bad argument)."""


class DomainError(NhtrackError):
    """Evaluation left the declared domain (singularity, non-finite value).

    Carries the offending time and state when raised inside an integration.
    """

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class ConstraintViolationError(NhtrackError):
    """An ambient velocity lies too far off the constraint distribution."""


class SingularProblemError(NhtrackError):
    """The control-effort weight is zero or negative; the stationary
    condition no longer determines the control."""


class SingularJacobianError(NhtrackError):
    """Elimination hit a negligible pivot. Carries the failing iterate."""

    def __init__(self, message, alpha=None):
        super().__init__(message)
        self.alpha = alpha


class DegenerateFitError(NhtrackError):
    """A convergence-order fit is meaningless (exact integration, zero error)."""


class ConfigError(NhtrackError):
    """Malformed experiment configuration. Carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
