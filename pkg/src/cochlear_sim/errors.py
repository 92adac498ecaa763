"""Exception types shared across the package."""


class CochlearModelError(Exception):
    """Base class for all model-specific errors."""


class ConfigError(CochlearModelError):
    """Invalid configuration or parameter value."""


class SingularMatrix(CochlearModelError):
    """A system matrix is numerically singular (condition estimate too poor)."""


class NumericalBlowup(CochlearModelError):
    """Simulation state exceeded the physical-plausibility guard.

    Carries the failing step index in ``step``.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoConvergence(CochlearModelError):
    """Eigenvalue solver failed within its iteration budget."""


class InsufficientHistory(CochlearModelError):
    """Not enough consecutive recorded states for the requested computation."""


class NoResponse(CochlearModelError):
    """Response never crossed the detection threshold."""


class WindowTooLong(CochlearModelError):
    """Analysis window does not fit in the available response duration."""


class UnsupportedRatio(CochlearModelError):
    """Requested resampling ratio cannot be expressed as a small rational."""
