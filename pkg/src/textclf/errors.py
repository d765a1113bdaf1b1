class TextClfError(Exception):
    """Base class for all package errors."""


class DomainError(TextClfError, ValueError):
    pass


class ShapeError(TextClfError, ValueError):
    pass


class SchemaError(TextClfError):
    pass


class ParseError(TextClfError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class LabelError(ParseError):
    pass


class ConfigError(TextClfError):
    pass


class NumericError(TextClfError):
    """Raised when a NaN or infinity shows up where it must not."""
