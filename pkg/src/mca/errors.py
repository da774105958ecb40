"""Exception types shared across the package."""


class McaError(Exception):
    """Base class; the CLI maps it to a data error (exit 1)."""


class InvalidArgument(McaError, ValueError):
    pass


class FormatError(McaError):
    pass


class DegenerateSeriesError(McaError):
    """Raised for constant series; ``indices`` lists the offenders."""

    def __init__(self, indices, msg=None):
        self.indices = list(indices)
        super().__init__(msg or f"constant (degenerate) series at indices {self.indices}")
