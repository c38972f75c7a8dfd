"""Exception types shared across the package."""


class CompetesimError(Exception):
    """Base class for all errors raised by competesim."""


class InvalidArgumentError(CompetesimError, ValueError):
    """An argument is outside the operation's documented domain."""


class DataExhaustedError(CompetesimError):
    """A finite population source ran out of rows."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


class UnfittedError(CompetesimError):
    """Prediction was requested from a learner that has no data."""


class ConfigError(CompetesimError):
    """An experiment configuration could not be parsed or validated."""


class PreconditionError(InvalidArgumentError):
    """A theorem's precondition does not hold for the supplied parameters."""
