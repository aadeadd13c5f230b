"""Exception hierarchy shared by all slowdown modules."""


class SlowdownError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(SlowdownError, ValueError):
    """An input violates a documented precondition (length, sign, range)."""


class DegenerateSeriesError(SlowdownError, ValueError):
    """A series or window has zero variance where a positive one is required."""


class SingularDesignError(SlowdownError, ValueError):
    """A regression design matrix is rank deficient."""


class ExplosionError(SlowdownError, RuntimeError):
    """A simulated path left the finite region allowed by the explosion bound."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class DataError(SlowdownError, ValueError):
    """Malformed or inconsistent input data (CSV rows, gaps, duplicates)."""


class FetchError(SlowdownError, RuntimeError):
    """Remote price retrieval failed."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status
