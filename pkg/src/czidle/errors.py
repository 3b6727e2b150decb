"""Exception hierarchy shared across the package."""


class CzidleError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CzidleError):
    """Invalid or inconsistent configuration input."""


class FluxDomainError(CzidleError, ValueError):
    """Flux argument outside the monotonic branch of the flux-frequency map."""


class FrequencyRangeError(CzidleError, ValueError):
    """Frequency outside the invertible range of the flux-frequency map."""


class SingularityError(CzidleError, ZeroDivisionError):
    """A formula was evaluated at a pole (e.g. zero resonator detuning)."""


class NumericError(CzidleError):
    """A numerical routine failed to reach its requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class CalibrationError(CzidleError):
    """A calibration stage failed to converge or refused to run."""


class FitError(CzidleError):
    """A curve fit failed or produced unusable parameters."""


class DegenerateDataError(CzidleError):
    """Data left after filtering is insufficient for the requested analysis."""


class WaveformWarning(UserWarning):
    """Synthesized waveform is degraded (e.g. filter erodes the plateau)."""
