"""Exception types shared across the package."""


class PassivnetError(Exception):
    """Base class for all package errors."""


class DimensionError(PassivnetError, ValueError):
    """Matrix shapes are inconsistent."""


class GraphError(PassivnetError, ValueError):
    """Invalid coupling graph (self loops, duplicates, asymmetry)."""


class ConfigError(PassivnetError, ValueError):
    """Malformed configuration or certificate document.

    ``path`` is the JSON path of the offending element, when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class InfeasibleError(PassivnetError):
    """The local semidefinite program has no solution."""

    def __init__(self, message, status=None, subsystem=None):
        self.status = status
        self.subsystem = subsystem
        super().__init__(message)


class SolverNumericalFailure(PassivnetError):
    """The conic solver stopped without a reliable answer.

    Distinct from infeasibility; usually retryable with rescaled data.
    """

    def __init__(self, message, status=None, subsystem=None):
        self.status = status
        self.subsystem = subsystem
        super().__init__(message)


class SingularSystemError(PassivnetError, ArithmeticError):
    """A linear solve hit a singular matrix (e.g. closed loop eigenvalue at 1)."""


class DivergenceError(PassivnetError, FloatingPointError):
    """Simulated state became non-finite."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class ConvergenceError(PassivnetError, RuntimeError):
    """An iterative method did not reach its tolerance."""
