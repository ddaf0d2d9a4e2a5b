"""Exception hierarchy shared by the fitting library and the CLI."""


class FairMarsError(Exception):
    """Base class for all library errors."""


class ConfigError(FairMarsError, ValueError):
    """Invalid configuration: unknown column, bad parameter range, etc."""


class DataError(FairMarsError, ValueError):
    """Input data that cannot be used (empty, missing cells, non-finite)."""


class ParseError(DataError):
    """A cell that should be numeric could not be parsed."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class PreconditionError(FairMarsError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class RankDeficiencyError(FairMarsError, ArithmeticError):
    """Normal equations stayed singular after regularization."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class InputError(FairMarsError, ValueError):
    """Prediction input with the wrong shape."""


class ModelFormatError(FairMarsError):
    """A saved model file is corrupted or has an incompatible version."""
