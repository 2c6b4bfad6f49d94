"""Exception types shared across the package."""


class RBNetError(Exception):
    """Base class for package errors."""


class DataError(RBNetError, ValueError):
    """Malformed input data (bad CSV cell, non-monotone dates, ...)."""


class InsufficientHistoryError(RBNetError, ValueError):
    """A lookback window reaches before the start of the available data."""


class SolverConvergenceError(RBNetError, RuntimeError):
    """The risk-budget solve did not reach its residual tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(RBNetError, RuntimeError):
    """The stationarity system could not be factorized."""


class DegenerateSelectionError(RBNetError, ValueError):
    """Asset selection left nothing to allocate to (all gates closed)."""


class TrainingError(RBNetError, RuntimeError):
    """Training aborted; carries the step index where it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class UndefinedStatisticError(RBNetError, ValueError):
    """A performance ratio is undefined (zero volatility or drawdown).

    Carries the statistics that were computable so callers can still report
    them.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(RBNetError, ValueError):
    """Invalid run configuration."""
