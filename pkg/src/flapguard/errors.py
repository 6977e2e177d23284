"""Exception types shared across the flapguard modules."""


class FlapguardError(Exception):
    """Base class for all library errors."""


class WindowNotFull(FlapguardError):
    """Raised when window statistics are requested before the buffer is full."""


class LagOutOfRange(FlapguardError):
    """Raised when an autocorrelation lag does not fit inside the sequence."""


class DegenerateWindow(FlapguardError):
    """Raised when an ACF is normalized by a non-positive zero-lag value."""


class EmptyLagBand(FlapguardError):
    """Raised when the requested lag band contains no integer lag."""


class InvalidBand(FlapguardError):
    """Raised when the lag band does not fit inside the analysis window."""


class NonFiniteSample(FlapguardError):
    """Raised when a detector receives NaN or an infinite value."""


class NotArmed(FlapguardError):
    """Raised when a TEO tracker is queried before it has been armed."""


class ConfigInvalid(FlapguardError):
    """Raised for malformed, inconsistent or unknown configuration values."""


class AlgebraicSolveFailed(FlapguardError):
    """Raised when the feeder Newton iteration fails to converge."""


class NumericalFailure(FlapguardError):
    """Raised when a continuous state becomes non-finite during integration."""


class UnknownObservable(FlapguardError, KeyError):
    """Raised when a run result is asked for an observable it does not record."""
