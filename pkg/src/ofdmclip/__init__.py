"""Receiver-side Bayesian recovery of OFDM clipping distortion."""

__version__ = "0.1.0"

from .errors import ConfigError, InputError, NumericError, OfdmClipError  # noqa: E402
from .link import OfdmConfig  # noqa: E402

__all__ = ["ConfigError", "InputError", "NumericError", "OfdmClipError", "OfdmConfig", "__version__"]
