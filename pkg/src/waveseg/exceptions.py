"""Error taxonomy shared across the library."""


class WavesegError(Exception):
    """Base class for all library errors."""


class DimensionError(WavesegError, ValueError):
    """Tensor extents are inconsistent with the requested operation."""


class ConfigurationError(WavesegError, ValueError):
    """An operation or model knob was set to an unsupported value."""


class DomainError(WavesegError, ValueError):
    """A numeric argument lies outside the operation's domain."""


class NumericalError(WavesegError, ArithmeticError):
    """A computation produced non-finite values."""


class DataError(WavesegError, ValueError):
    """On-disk or user-supplied data is malformed."""
