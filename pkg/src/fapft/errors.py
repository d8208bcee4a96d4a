"""Exception hierarchy for the toolkit.

Two broad families matter to callers (and to the CLI exit-code contract):
``DataError`` covers malformed or incompatible inputs (files, plans,
checkpoints), ``NumericError`` covers degenerate or diverging numerics.
"""


class PftError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class DataError(PftError):
    """Malformed or incompatible data (files, formats, plans)."""

    exit_code = 2


class NumericError(PftError):
    """Degenerate input or numerical failure."""

    exit_code = 3


class UsageError(PftError):
    """Bad command-line usage (unknown flag, missing argument)."""

    exit_code = 1


# tensor numerics
class DimensionMismatch(NumericError):
    pass


class DegenerateVector(NumericError):
    pass


class DegenerateRanking(NumericError):
    pass


class InvalidValue(NumericError):
    pass


class EmptyInput(NumericError):
    pass


# checkpoint codec
class FormatError(DataError):
    pass


class CorruptFile(DataError):
    pass


class UnsupportedDtype(DataError):
    pass


class IoError(DataError):
    pass


# architecture catalog
class UnknownArchitecture(DataError):
    pass


class UnmappedTensor(DataError):
    pass


# angle analysis
class IncompatibleCheckpoints(DataError):
    pass


class IncompatibleReports(DataError):
    pass


# freeze planning
class InvalidPolicy(DataError):
    pass


class NoGuidelines(DataError):
    pass


# training harness
class IncompatiblePlan(DataError):
    pass


class DivergenceError(NumericError):
    pass


# soup merging
class EvaluationError(NumericError):
    pass
