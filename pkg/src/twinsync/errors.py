"""Exception hierarchy shared across the package.

The CLI maps each family onto a process exit code.
"""


class TwinSyncError(Exception):
    """Base class for all package errors."""


class ShapeError(TwinSyncError, ValueError):
    pass


class EmptyInputError(TwinSyncError, ValueError):
    pass


class NumericError(TwinSyncError, ArithmeticError):
    pass


class ConfigError(TwinSyncError, ValueError):
    pass


class DataError(TwinSyncError):
    """Anything that goes wrong while obtaining samples."""


class DataFormatError(DataError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


class InsufficientDataError(DataError, ValueError):
    pass


class SequencingError(TwinSyncError, ValueError):
    pass
