"""Exception types raised by the numerical modules.

Invalid arguments raise plain ``ValueError``; the classes below signal
numerical failures and carry whatever partial state is useful to the caller.
"""


class NumericalError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class NotSPDError(NumericalError):
    """Cholesky factorization of a matrix that should be SPD failed."""


class ConvergenceError(NumericalError):
    def __init__(self, message, last=None, trace=None):
        super().__init__(message)
        self.last = last
        self.trace = trace


class EstimationError(NumericalError):
    """Parameter estimation cannot proceed (e.g. a singular parameter system)."""


class NoOutlierError(EstimationError):
    """The maximum mode carries no interface energy, so there is nothing to suppress."""


class MatchingError(NumericalError):
    pass


class StabilityError(NumericalError):
    """Requested time step violates the central-difference stability bound."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
