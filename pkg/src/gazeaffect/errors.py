"""Exception hierarchy shared across the package."""


class GazeAffectError(Exception):
    """Base class for all package errors."""


class DataError(GazeAffectError):
    """Malformed or inconsistent input data (CSV, manifest, shapes)."""


class ConfigError(GazeAffectError):
    """Invalid experiment or CLI configuration."""


class DivergenceError(GazeAffectError):
    """Training produced a non-finite loss.

    Carries the last epoch that still had a finite validation loss.
    """

    def __init__(self, message: str, last_finite_epoch: int = 0):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch
