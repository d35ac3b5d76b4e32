"""Exception types shared across the package."""


class AfrnetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AfrnetError):
    """Operands or files have incompatible shapes."""


class DataError(AfrnetError):
    """Input data violates a documented precondition."""


class FileFormatError(DataError):
    """A file on disk is not in the expected on-disk format."""


class ContractError(AfrnetError):
    """An argument violates an API contract."""


class SolverError(AfrnetError):
    """An iterative solver failed to converge within its budget."""


class TrainingError(AfrnetError):
    """Training produced a non-finite quantity.

    ``step`` carries the optimizer step index at which it happened.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
