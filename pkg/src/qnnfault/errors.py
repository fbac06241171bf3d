"""Exception hierarchy.

Data/schema problems and numerical problems are kept apart so the command
line front end can map them onto distinct exit codes.
"""


class QnnFaultError(Exception):
    """Base class for every error raised by this package."""


class InvalidValueError(QnnFaultError, ValueError):
    """A non-finite or out-of-domain scalar was supplied."""


class ShapeError(QnnFaultError, ValueError):
    """Tensor extents or layer chaining are inconsistent."""


class DataError(QnnFaultError):
    """Malformed input data (files, tables, datasets)."""


class BadMagicError(DataError):
    pass


class TruncatedPayloadError(DataError):
    pass


class ShapeChainError(DataError):
    pass


class SchemaError(DataError):
    """A results or coefficient table does not follow the expected columns."""


class NumericalError(QnnFaultError):
    pass


class CollinearityError(NumericalError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("design matrix is rank deficient; dependent columns: "
                         + ", ".join(self.columns))
