"""Exception types shared across the package."""


class ReschaosError(Exception):
    """Base class for all library-specific errors."""


class InvalidSpectrumError(ReschaosError):
    """A spectrum field violates a construction invariant."""


class DegeneratePositionsError(InvalidSpectrumError):
    """Two bare crossing positions coincide; the model is singular there."""


class InvalidRangeError(ReschaosError):
    """A numeric parameter is outside its admissible range."""


class LengthMismatchError(ReschaosError):
    """Paired sequences have different lengths."""


class PoleProximityError(ReschaosError):
    """Evaluation point is too close to a pole to be numerically meaningful."""


class NonPositiveCoefficientError(ReschaosError):
    """Secular coefficients must be positive for the bracketing guarantee."""


class BracketFailureError(ReschaosError):
    """No sign change found inside an analytic bracket."""


class TooFewPointsError(ReschaosError):
    """Not enough data points for the requested statistic."""


class WindowTooLargeError(ReschaosError):
    """Counting window exceeds the usable span of the sequence."""


class MissingDeltaMuError(ReschaosError):
    """The operation needs magnetic-moment differences but none are set."""


class EmptyTraceError(ReschaosError):
    """A trace contains no usable (unmasked, finite) points."""


class ConfigError(ReschaosError):
    """Experiment configuration is malformed or inconsistent."""


class NumericalFailureError(ReschaosError):
    """Too many per-realization failures to trust the aggregate result."""


class SolverGuaranteeWarning(UserWarning):
    """Issued when the solver falls back to a scan without completeness guarantees."""
