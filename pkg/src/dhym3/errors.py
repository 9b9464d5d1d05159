"""Exception hierarchy shared by the solver, harness and CLI."""


class DHYMError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateMetricError(DHYMError, ValueError):
    """The reference Kähler form is not positive-definite above the floor."""


class SingularDeterminantError(DHYMError, ZeroDivisionError):
    """A relative eigenvalue is zero where F requires an invertible argument."""


class OutsideConeError(DHYMError, ValueError):
    """Input lies outside the cone where the requested quantity is defined."""


class InadmissibleClassError(DHYMError, ValueError):
    """Class integrals violate the compatibility identity or the c_t bounds."""


class UnsupportedPhaseError(DHYMError, ValueError):
    """Phase angle lies outside the supercritical range (pi/2, 3pi/2)."""


class HypothesisViolatedError(DHYMError):
    """The background form fails the subsolution condition."""

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins or {}


class EllipticityLostError(DHYMError):
    """A cone margin became nonpositive somewhere on the grid."""


class NoConvergenceError(DHYMError):
    """Newton iteration did not reach the requested tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
        self.trace = None


class ContinuationStalledError(DHYMError):
    """The continuation step size fell below its minimum."""

    def __init__(self, message, trace=None, t_reached=0.0):
        super().__init__(message)
        self.trace = trace
        self.t_reached = t_reached


class SamplerStarvedError(DHYMError):
    """Rejection sampling exhausted its budget before producing enough points."""
