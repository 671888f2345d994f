"""Exception types shared across the package."""


class WeakKamError(Exception):
    """Base class for all package errors."""


class InvalidInputError(WeakKamError, ValueError):
    """Raised on malformed inputs: shape mismatch, non-finite entries, bad parameters."""


class IntegrationFailureError(WeakKamError, RuntimeError):
    """An implicit integration step failed to converge.

    Attributes
    ----------
    step : int
        Index of the offending time step.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class NonConvergenceError(WeakKamError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    Carries the best iterate found so far (``best``) and, where useful,
    the residual history (``history``).
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history


class ResolutionError(WeakKamError, RuntimeError):
    """A sampling grid was too coarse to bracket a minimizer (names the node)."""

    def __init__(self, message, node=None, axis=None):
        super().__init__(message)
        self.node = node
        self.axis = axis


class NonDifferentiablePointError(WeakKamError, ValueError):
    """Gradient requested too close to a detected kink of a grid field."""


class UnsupportedModelError(WeakKamError, ValueError):
    """The requested operation does not apply to this model (dimension, sign...)."""
