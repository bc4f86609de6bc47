"""Exception types shared across the package."""


class CsasrError(Exception):
    """Base class for all package errors."""


class ShapeError(CsasrError):
    """Raised when an operation receives incompatibly shaped operands."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " and ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class SingularMatrixError(CsasrError):
    """Raised when a matrix inverse is refused or fails.

    Carries a 1-norm condition estimate of the offending matrix so callers
    can report which input went bad.
    """

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class GraphError(CsasrError):
    """Raised on misuse of the computation graph (non-scalar backward, double backward)."""


class DataError(CsasrError):
    """Raised on invalid or infeasible data (corpus generation, CTC feasibility)."""


class CorpusFormatError(CsasrError):
    """Raised when a corpus file cannot be parsed.

    ``record`` is the 1-based line/record index where parsing failed.
    """

    def __init__(self, message: str, record: int | None = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class ConfigError(CsasrError):
    """Raised when a run config fails validation.

    ``field`` names the offending config field (dotted path).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
