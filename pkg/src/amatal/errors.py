"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``ConfigError`` -> 3,
``EvalInputError`` -> 4.
"""


class AmaError(Exception):
    """Base class for all package errors."""


class ConfigError(AmaError, ValueError):
    """Invalid configuration, shapes, or weights that do not fit a config."""


class DataError(AmaError, ValueError):
    """Malformed or non-finite input data, including file format errors."""


class EvalInputError(AmaError, ValueError):
    """Evaluation inputs that cannot be scored (no ground truth, no shared videos)."""
