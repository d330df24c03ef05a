"""Exception taxonomy shared across the package.

Each class maps to one CLI exit code so failures are scriptable:
validation/config -> 1, solver -> 2, training -> 3, storage/I-O -> 4.
"""


class NadjError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(NadjError):
    """Invalid configuration, argument, or domain-type invariant violation."""

    exit_code = 1


class SolverError(NadjError):
    """Linear solve failed or did not reach the required residual."""

    exit_code = 2

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TrainingError(NadjError):
    """Training aborted (e.g. non-finite loss)."""

    exit_code = 3

    def __init__(self, message, stage=None, epoch=None):
        super().__init__(message)
        self.stage = stage
        self.epoch = epoch


class StorageError(NadjError):
    """File format, hash, or manifest problem."""

    exit_code = 4
