"""Exception hierarchy shared by all covfest modules."""


class CovfestError(Exception):
    """Base class for every error raised by covfest."""


class InvalidInput(CovfestError, ValueError):
    pass


class DegenerateCovariance(CovfestError, ValueError):
    pass


class DomainError(CovfestError, ArithmeticError):
    """A functional was evaluated outside its domain (e.g. log-det of a singular matrix)."""


class PlanError(CovfestError, ValueError):
    pass


class ConfigError(CovfestError, ValueError):
    """Invalid experiment configuration. ``key`` names the offending field."""

    def __init__(self, key: str, message: str | None = None):
        self.key = key
        super().__init__(key if message is None else f"{key}: {message}")
