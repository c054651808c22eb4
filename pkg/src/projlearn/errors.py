"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""


class ProjlearnError(Exception):
    """Base class for all toolkit errors."""


class UsageError(ProjlearnError):
    """Invalid command-line arguments or option combinations."""


class DataError(ProjlearnError):
    """Malformed input files, mismatched shapes, missing resources."""


class ModelFormatError(DataError):
    """Model file is corrupt or has an unsupported version."""


class NumericalError(ProjlearnError):
    """Training or optimization produced non-finite values."""
