"""Exception types shared across the pipeline."""


class KgandError(Exception):
    """Base class for all pipeline errors."""


class ParseError(KgandError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DatatypeError(ParseError):
    """A literal does not parse as its declared datatype."""


class DimensionError(KgandError):
    """A vector row does not match the expected dimensionality."""


class ConfigError(KgandError):
    """Invalid configuration (ratios, grids, missing prerequisites)."""


class TrainingError(KgandError):
    """Training aborted (non-finite gradients, empty split)."""
