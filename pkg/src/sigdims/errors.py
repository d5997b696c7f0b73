"""Exception classes shared across the package.

The CLI maps these onto exit codes: malformed data/files -> 3,
numerical failures -> 4, everything argparse-shaped -> 2.
"""


class DimensionError(ValueError):
    """Shapes or counts do not line up (columns, filters, spatial sizes)."""


class DataError(ValueError):
    """Values are invalid: non-finite entries, out-of-range labels."""


class FormatError(ValueError):
    """A serialized file is malformed (magic, version, dtype, record size)."""


class LengthError(FormatError):
    """A payload is shorter than its header promises."""


class InsufficientDataError(ValueError):
    """Too few samples to finalize a statistic."""


class SymmetryError(ValueError):
    """A matrix required to be symmetric is not."""


class DeadLayerError(ValueError):
    """A layer (or the first layer of a plan) carries zero variance."""


class NumericalError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


class TrainingError(ArithmeticError):
    """Training diverged; carries the epoch index in its message."""
