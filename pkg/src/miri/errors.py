"""Exception hierarchy shared by every module."""


class MiriError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MiriError, ValueError):
    pass


class ParseError(MiriError, ValueError):
    """Malformed CSV input. Carries the 1-based row and column when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class PreprocessingError(MiriError, ValueError):
    pass


class MaskSpecError(MiriError, ValueError):
    pass


class ConfigError(MiriError, ValueError):
    pass


class MetricError(MiriError, ValueError):
    pass


class TrainingError(MiriError, RuntimeError):
    pass


class SolverError(MiriError, RuntimeError):
    pass
