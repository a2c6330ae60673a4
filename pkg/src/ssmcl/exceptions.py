"""Exception types shared across the package."""


class SsmclError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SsmclError):
    """An array argument has the wrong rank, size, or dimension pairing."""


class DomainError(SsmclError):
    """A value lies outside the mathematical domain of an operation."""


class ConvergenceError(SsmclError):
    """An iterative solver exhausted its iteration budget."""


class ConfigurationError(SsmclError):
    """A run configuration is inconsistent, incomplete, or contradictory."""


class NumericError(SsmclError):
    """Training produced a non-finite quantity (NaN or Inf loss)."""


class FormatError(SsmclError):
    """A serialized file is malformed; carries the offending byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
