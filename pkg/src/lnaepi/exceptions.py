"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class NumericalFailure(ArithmeticError):
    """Raised when an integration, factorisation or filter update breaks down.

    Parameters
    ----------
    message : str
        Human readable description.
    time : float, optional
        Model time at which the failure was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegenerateWeightsError(NumericalFailure):
    """All particle weights are zero (particle collapse)."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""
