"""Exception types shared across the package.

The CLI maps these onto distinct process exit codes, so library code should
raise the most specific class that applies.
"""


class BwmaError(Exception):
    """Base class for all package errors."""


class ShapeError(BwmaError, ValueError):
    """Tensor/layer shape mismatch. The message names the offending dims."""


class ConfigError(BwmaError, ValueError):
    """Invalid run configuration or CLI arguments."""


class DataFormatError(BwmaError, ValueError):
    """Malformed dataset or checkpoint bytes. Names the byte offset if known."""


class MappingError(BwmaError, ValueError):
    """Weight-to-conductance mapping is undefined for the given layer."""


class NumericError(BwmaError, ArithmeticError):
    """Non-finite values appeared where finite values are required."""
