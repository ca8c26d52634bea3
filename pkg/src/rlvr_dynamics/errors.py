"""Exception classes. Each maps to a CLI exit code."""


class DomainError(ValueError):
    """Input outside an operation's domain (exit code 1)."""

    exit_code = 1


class InvalidRewardError(DomainError):
    """A reward is neither ``r_correct`` nor ``r_wrong``."""


class NumericalConsistencyError(ArithmeticError):
    """A computed quantity violated a guaranteed bound (exit code 2)."""

    exit_code = 2
