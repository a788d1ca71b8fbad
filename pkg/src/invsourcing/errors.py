"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad run configuration, malformed input file, or invalid option."""


class SolverError(RuntimeError):
    """Numerical failure inside the stage optimizer or the value iteration."""


class NonConvergenceError(SolverError):
    """Iteration limit reached before the requested tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history) if residual_history is not None else []


class GridCoverageError(SolverError):
    """Simulated states pile up against the inventory grid bound."""


class CalibrationError(RuntimeError):
    """Moment-matching loop stagnated or lost its bracket."""
