"""Exception types shared across the package."""


class RejectedInput(ValueError):
    """Input violates a documented precondition (infeasible point, bad shape, bad config)."""


class NumericalError(ArithmeticError):
    """A numerical operation left its supported regime (singular factorization, non-PD matrix)."""


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested tolerance within its iteration budget.

    Carries the best iterate found so far and its residual.
    """

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class InvariantViolation(RuntimeError):
    """A runtime invariant that is supposed to hold on every round was observed to fail."""


class ConfigError(RejectedInput):
    """Experiment configuration failed validation; the message names the violated constraint."""
