"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands refer to incompatible variable spaces."""


class StructureError(RuntimeError):
    """An object violates a structural precondition (non-chordal graph,
    subset outside its clique, missing block, ...)."""


class ConfigError(ValueError):
    """A configuration requests data that was not supplied."""


class ParseError(ValueError):
    """An input file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MetricUndefinedError(ArithmeticError):
    """A benchmark metric is undefined for the given reference values."""
