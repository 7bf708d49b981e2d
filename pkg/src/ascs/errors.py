"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
bad data exits 3, infeasible solver inputs exit 4, I/O failures exit 5.
"""


class AscsError(Exception):
    """Base class for all package errors."""


class DataError(AscsError):
    """The input data violates a runtime contract (non-finite value,
    degenerate prefix, malformed record, ...)."""


class FormatError(DataError):
    """A serialized artifact (LIBSVM line, snapshot file) cannot be parsed."""


class StreamLengthError(DataError):
    """More samples were presented than the declared stream length."""


class SolverInfeasibleError(AscsError):
    """No hyperparameter satisfies the requested probability budget.

    The message names the binding constraint (e.g. the saturation
    probability exceeding the requested miss budget).
    """


class OracleUnavailableError(AscsError):
    """An exact reference computation would exceed its size guard."""
