"""Exception types raised by the public API."""


class LipnetsError(Exception):
    """Base class for all library errors."""


class ZeroMatrixError(LipnetsError):
    """Matrix is identically zero where a nonzero matrix is required."""


class NotPreScaledError(LipnetsError):
    """Spectral norm of the input exceeds the safe range for orthogonalization."""


class OddWidthError(LipnetsError):
    """GroupSort2 requires an even number of coordinates."""


class ShapeMismatchError(LipnetsError):
    """Array shapes do not chain consistently."""


class BadClassIndexError(LipnetsError):
    """Class index outside the logit vector."""


class UnconstrainedNetError(LipnetsError):
    """Operation is only meaningful for a Lipschitz-constrained network."""


class NotArgmaxError(LipnetsError):
    """Queried class is not the arg-max of the logits."""


class NoBracketError(LipnetsError):
    """Bisection could not bracket a sign change."""


class UnsupportedWeightsError(LipnetsError):
    """Distribution weights outside what the exact solver supports."""


class UnsatisfiableError(LipnetsError):
    """Rejection sampling exhausted its retry budget."""


class NonFiniteLossError(LipnetsError):
    """Training produced a NaN/Inf loss; the epoch is recorded on the exception."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ConfigInvalidError(LipnetsError):
    """CLI config failed validation; message carries the offending field path."""


class OutputUnwritableError(LipnetsError):
    """Declared output location cannot be written."""
