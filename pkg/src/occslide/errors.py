"""Exception hierarchy shared by every module."""


class OccSlideError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(OccSlideError, ValueError):
    """An argument lies outside the domain of the requested density."""


class NonConvergence(OccSlideError, ArithmeticError):
    """Adaptive quadrature ran out of subdivisions before meeting tolerance.

    ``estimate`` and ``error`` carry the best result reached so far (scalars
    or arrays, matching the call that failed); ``where`` names the
    sub-integral that failed when the integral was nested.
    """

    def __init__(self, message, estimate=None, error=None, where=None):
        if where:
            message = f"{message} [{where}]"
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.where = where


class Overflow(OccSlideError, OverflowError):
    pass


class SingularCovariance(OccSlideError, ValueError):
    pass


class NonFinite(OccSlideError, ArithmeticError):
    """A state left the floating range (ODE trajectory or simulated path)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotStableSliding(OccSlideError, ValueError):
    """The boundary drifts violate a_L(y) > 0 and a_R(y) > 0."""


class LeftSlidingRegion(NotStableSliding):
    """The deterministic sliding orbit exits the stable sliding region."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class IndependenceViolated(OccSlideError, ValueError):
    """Noise in x is correlated with noise in y (beta != 0)."""


class DegenerateDirection(OccSlideError, ValueError):
    """b_L == b_R, so the occupation time does not move y."""


class EmptyRange(OccSlideError, ValueError):
    pass


class MismatchedGrids(OccSlideError, ValueError):
    pass


class NegativeDensityWarning(RuntimeWarning):
    """Cancellation produced a density more negative than the clamp slack."""
