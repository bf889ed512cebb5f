"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class SolverError(RuntimeError):
    """An iterative linear solve did not reach its tolerance.

    ``residual`` is the relative residual norm actually achieved.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepError(RuntimeError):
    """A time step failed during integration; ``step`` is its zero-based index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause
