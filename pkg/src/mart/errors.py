"""Exception hierarchy shared by every subpackage."""


class MartError(Exception):
    """Base class for all library errors."""


class DimensionError(MartError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(MartError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class DegenerateVectorError(MartError, ValueError):
    """A vector with zero norm reached a normalised similarity."""


class NumericError(MartError, FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class TooShortError(MartError, ValueError):
    """A signal or span is shorter than an operation requires."""


class ConfigError(MartError, ValueError):
    """Invalid configuration value or inconsistent setup."""


class RelationshipError(MartError, ValueError):
    """Two tree nodes are not in the required parent/child relationship."""


class UndefinedMetricError(MartError, ValueError):
    """A metric is undefined for the given labels (e.g. a single class)."""


class ParseError(MartError, ValueError):
    """Malformed binary or text input.

    ``offset`` is the byte (or line) position where parsing failed.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
