"""Exception hierarchy shared by every layer of the package.

The CLI maps each family onto its own exit code, so raise the most specific
class that applies.
"""


class PbgruError(Exception):
    """Base class for all package errors."""


class ConfigError(PbgruError):
    """Invalid, unknown or inconsistent configuration."""


class DataError(PbgruError):
    """Malformed or inconsistent input data."""


class ShapeError(PbgruError, ValueError):
    """Operand shapes do not agree."""


class NumericError(PbgruError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""
