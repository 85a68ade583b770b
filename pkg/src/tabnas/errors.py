"""Exception types raised across the package."""


class TabNASError(Exception):
    """Base class for all package errors."""


class ValidationError(TabNASError, ValueError):
    """An input does not satisfy a documented contract."""


class ConfigError(ValidationError):
    """A run configuration is malformed; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class EnumerationTooLarge(TabNASError):
    """The requested exact computation would enumerate too many architectures."""


class EmptyFeasibleSet(TabNASError):
    """The current policy assigns zero probability to every feasible architecture."""


class NonFiniteError(TabNASError, FloatingPointError):
    """A gradient, activation or loss became NaN or infinite."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class SelectionFailed(TabNASError):
    """No feasible architecture appeared among the final samples."""


class TableError(ValidationError):
    """A loss table file is malformed or incomplete."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
