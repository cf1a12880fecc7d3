"""
Exception hierarchy shared by the core and service layers.
"""


class KSFlowError(Exception):
    """Base class for all ksflow failures."""


class ConfigError(KSFlowError, ValueError):
    """Invalid run configuration or parameter block."""


class PreconditionError(KSFlowError, ValueError):
    """An operation was called outside the hypotheses it is defined under."""


class ArtifactError(KSFlowError, OSError):
    """Reading or writing a run artifact failed."""


class StepRejected(KSFlowError):
    """A single time step could not be accepted.

    ``reason`` is one of ``"singular"``, ``"nonfinite"``, ``"monotonicity"``
    or ``"bounds"``; the driver halves dt and retries.
    """

    def __init__(self, reason, message):
        super().__init__(message)
        self.reason = reason
