class EpsisError(Exception):
    """Base class for every error raised by `epsistools`."""


class DomainError(EpsisError, ValueError):
    """An argument lies outside the domain of the operation (state, time, level)."""


class ConfigError(EpsisError, ValueError):
    """
    A run configuration is invalid.

    Attributes
    ----------
    `key` : str
        The offending configuration key, e.g. "model.mu".
    """

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class InfeasibleWorkloadError(EpsisError, RuntimeError):
    """
    An exact computation was refused because its estimated cost exceeds the budget.

    Attributes
    ----------
    `estimate` : float
        Estimated number of floating point operations.
    `budget` : float
        The configured budget (`max_work`).
    """

    def __init__(self, what: str, estimate: float, budget: float):
        super().__init__(
            f"{what}: estimated work {estimate:.3e} exceeds budget {budget:.3e}"
        )
        self.estimate = estimate
        self.budget = budget


class NumericalFailure(EpsisError, RuntimeError):
    """A numerical procedure could not meet its accuracy contract."""
