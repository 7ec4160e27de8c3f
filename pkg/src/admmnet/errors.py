"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class FormatError(ValueError):
    """A data file is structurally malformed (bad magic, truncated payload)."""


class DataError(ValueError):
    """A data file is well-formed but semantically inconsistent."""


class BacktrackError(RuntimeError):
    """Backtracking exhausted its trial budget without a certified step."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite objective; partial traces are attached."""

    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces if traces is not None else []
