"""Exception types shared across the package."""


class SuperconstError(Exception):
    """Base class for all package errors."""


class ConfigError(SuperconstError):
    """Invalid configuration, dimensions, or CLI input (exit code 2)."""


class NumericError(SuperconstError):
    """Non-finite values encountered in the numeric core (exit code 3)."""


class TrainingError(NumericError):
    """Training aborted; carries the failing iteration and the last good state."""

    def __init__(self, message, iteration, checkpoint=None):
        super().__init__(message)
        self.iteration = iteration
        self.checkpoint = checkpoint


class DegenerateInputError(SuperconstError):
    """Input that makes an operation meaningless (e.g. all-zero symbol batch)."""


class NoDataError(SuperconstError):
    """A filter or stopping rule left nothing to report."""
