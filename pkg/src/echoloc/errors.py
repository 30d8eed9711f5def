"""Exception hierarchy.

Two families: :class:`DataError` for bad or insufficient input and
:class:`NumericalError` for failures inside a computation. The CLI maps
them to exit codes 2 and 3.
"""


class EcholocError(Exception):
    """Base class for all package errors."""


class DataError(EcholocError, ValueError):
    pass


class DimensionError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class NoEchoError(EmptyInputError):
    pass


class UnlabeledDatasetError(DataError):
    pass


class DegenerateDatasetError(DataError):
    pass


class OutOfRangeError(DataError):
    pass


class InsufficientCorrespondenceError(DataError):
    pass


class MultiTargetError(DataError):
    pass


class NumericalError(EcholocError, ArithmeticError):
    pass


class InfeasibleGeometryError(NumericalError):
    """Round-trip path not longer than the emitter-receiver baseline."""


class DivergenceError(NumericalError):
    pass


class DegenerateConfigurationError(NumericalError):
    pass


class FitDivergenceError(NumericalError):
    pass
