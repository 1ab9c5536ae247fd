"""Exception types shared across the package."""


class TwinError(Exception):
    """Base class for all airtwin errors."""


class InvalidCoordinate(TwinError):
    """Latitude/longitude outside the valid range."""


class InvalidConfig(TwinError):
    """A parameter or configuration value is out of its allowed range."""


class InvalidGeometry(TwinError):
    """Degenerate or malformed polygon."""


class InvalidInput(TwinError):
    """Non-finite or otherwise unusable input value."""


class NoData(TwinError):
    """An operation received no usable measurements or rows."""


class ParseError(TwinError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(TwinError):
    """Vector/matrix shape mismatch."""


class DegenerateVariance(TwinError):
    """A statistic that needs variance was handed a constant vector."""


class DegenerateTarget(TwinError):
    """Accuracy is undefined for non-positive target values."""


class SchemaMismatch(TwinError):
    """Feature names or zone ids do not line up between two artifacts."""
