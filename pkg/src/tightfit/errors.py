"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input: bad shapes, violated invariants, malformed files."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (degenerate average, diverged solve, ...)."""


class DegenerateAverageError(NumericalError):
    """Weighted rotation sum is rank-deficient; no unique nearest rotation."""


class NonConvergenceError(NumericalError):
    """Solver could not make progress; carries the best parameters seen."""

    def __init__(self, message, best_params=None, residual_trace=None):
        super().__init__(message)
        self.best_params = best_params
        self.residual_trace = residual_trace
