class OfdmClipError(Exception):
    """Base class for library errors."""


class ConfigError(OfdmClipError, ValueError):
    """Inconsistent or infeasible configuration."""


class InputError(OfdmClipError, ValueError):
    """Malformed input data (wrong length, zero vector, ...)."""


class NumericError(OfdmClipError, ArithmeticError):
    """Numerically singular operation (spectral null, rank deficiency)."""
