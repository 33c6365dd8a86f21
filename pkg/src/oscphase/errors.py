"""Exception hierarchy and the process exit codes the CLI maps them to."""


class OscPhaseError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(OscPhaseError):
    """Invalid configuration, schedule definition, or out-of-domain request."""

    exit_code = 2


class SingularityError(OscPhaseError):
    """Trajectory hit the inverse-cube singularity guard or the stepper underflowed.

    Carries the time at which integration had to stop.
    """

    exit_code = 3

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DegenerateFrameError(SingularityError):
    """The linear-flow amplitude Q (or the ellipse area) collapsed to zero."""


class ConsistencyError(OscPhaseError):
    """A quantity that must be real, or two routes that must agree, drifted past tolerance."""

    exit_code = 4


class OutputError(OscPhaseError):
    """Filesystem problem while writing results."""

    exit_code = 5


class BudgetError(OscPhaseError):
    """Step budget exhausted before reaching the final time."""

    exit_code = 1
