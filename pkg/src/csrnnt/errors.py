"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, DataError and
DomainError exit 2, NumericalError exits 3.
"""


class CsrnntError(Exception):
    pass


class ShapeError(CsrnntError):
    """A tensor has the wrong dimensions; the message names the offender."""


class DomainError(CsrnntError):
    """An argument is outside the operation's valid domain."""


class SizeError(CsrnntError):
    """An instance is too large for an exhaustive/oracle routine."""


class DataError(CsrnntError):
    """Input files or corpora are malformed or inconsistent."""


class NumericalError(CsrnntError):
    """Training or evaluation produced non-finite values."""
