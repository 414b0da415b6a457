"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and its
subclasses -> 3, NumericError and its subclasses -> 4.
"""


class SparError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SparError):
    """Invalid or mutually inconsistent configuration."""


class DataError(SparError):
    """Problem with user-supplied data."""


class DomainError(DataError):
    """A value lies outside the domain required by a GLM family."""


class InsufficientDataError(DataError):
    """Too few observations for the requested operation."""


class ParseError(DataError):
    """Malformed input file."""


class VersionError(DataError):
    """Persisted model has an unsupported format version."""


class CvError(DataError):
    """Cross-validation could not produce enough usable folds."""


class NumericError(SparError):
    """Numerical failure during fitting."""


class SingularError(NumericError):
    """Singular linear system; retry with a positive ridge penalty."""
