"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 1, I/O failures (plain ``OSError``) with 2, malformed or inconsistent
data with 3.
"""


class TimoError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(TimoError):
    """A run configuration or hyperparameter value is invalid."""


class DataError(TimoError):
    """A data file or in-memory array violates the format contract."""
