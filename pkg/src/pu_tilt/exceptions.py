"""Exception hierarchy for pu_tilt."""


class PuTiltError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PuTiltError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(PuTiltError, ValueError):
    """A value lies outside the [0, 1] feature domain."""


class NumericError(PuTiltError, FloatingPointError):
    """A computation produced a non-finite value."""


class NonConvergenceError(PuTiltError):
    """An iterative solver failed to converge.

    The last iterate is kept on ``last`` so callers can inspect it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class EstimationError(PuTiltError):
    """Every start of an estimation run failed."""


class InferenceError(PuTiltError):
    """Too many bootstrap replicates failed."""


class GenerationError(PuTiltError):
    """Simulated data could not be produced within the draw budget."""


class MaskingError(PuTiltError):
    """Masking produced an empty labeled sample."""


class DataError(PuTiltError, ValueError):
    """Input data could not be parsed or validated."""
