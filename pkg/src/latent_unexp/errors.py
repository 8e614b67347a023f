"""Exception hierarchy shared by every stage of the toolkit."""


class LatentUnexpError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ValidationError(LatentUnexpError, ValueError):
    """Input data or arguments violate a documented precondition."""

    exit_code = 1


class ParseError(ValidationError):
    """A row of an input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(ValidationError):
    """Filtering left no interactions."""


class ConfigError(ValidationError):
    """Invalid configuration key or value."""


class FormatError(ValidationError):
    """A persisted artifact does not match its declared format."""


class DivergenceError(LatentUnexpError, FloatingPointError):
    """Training produced a non-finite loss."""


class MissingEmbeddingError(LatentUnexpError, KeyError):
    """An entity required for scoring has no embedding."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing embedding"
