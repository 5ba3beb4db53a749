"""Exception types shared across the package."""


class AktError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AktError, ValueError):
    """Tensor dimensions are incompatible with an operation."""


class ValidationError(AktError, ValueError):
    """An input violates a documented precondition (labels, ranges, ...)."""


class NumericError(AktError, ArithmeticError):
    """A computation produced or received non-finite values."""


class StateError(AktError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class StreamError(AktError, RuntimeError):
    """A batch stream cannot satisfy a request."""


class ConfigError(AktError, ValueError):
    """Experiment configuration is malformed or inconsistent."""


class IdxFormatError(AktError, ValueError):
    """An IDX file does not match the format; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointError(AktError, ValueError):
    """A checkpoint file is invalid; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
