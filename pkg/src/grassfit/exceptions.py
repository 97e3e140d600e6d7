"""Exception types shared across the package."""


class GrassfitError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(GrassfitError, ValueError):
    """An argument violates a documented precondition (shape, range, plan)."""


class CutLocusError(GrassfitError, ValueError):
    """The log map was requested at (or numerically too close to) the cut locus."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateDataError(GrassfitError, ValueError):
    """Input data lacks the rank or variation the operation requires."""


class IntegrationError(GrassfitError, RuntimeError):
    """Numerical integration failed (non-finite state or unusable step size)."""


class ConvergenceError(GrassfitError, RuntimeError):
    """An iterative procedure exhausted its budget; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateWarpError(GrassfitError, RuntimeError):
    """The time warp collapsed the measurement indices onto one another."""


class ZeroVarianceError(GrassfitError, ValueError):
    """R-squared is undefined because the data has no spread."""
