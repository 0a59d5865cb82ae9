"""Exception hierarchy shared by all farfield modules.

The command line maps these onto exit codes: parameter/usage problems
exit 1, data problems exit 2, numerical failures exit 3.
"""


class FarfieldError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FarfieldError, ValueError):
    """Invalid argument values, violated preconditions, mismatched shapes."""


class RangeError(ParameterError):
    """A segment or index refers outside the extent of its signal."""


class DataError(FarfieldError):
    """Malformed or unreadable input data (files, configs, manifests)."""


class UndefinedMetricError(DataError):
    """A score whose denominator is empty (no reference material at all)."""


class NumericalError(FarfieldError, ArithmeticError):
    """A linear-algebra step failed beyond what regularization can fix."""


class InfeasibleLabelError(ParameterError):
    """CTC label sequence cannot be aligned inside the given frame count.

    The loss would be infinite; this is reported as a distinct error
    instead of returning ``inf``.
    """
