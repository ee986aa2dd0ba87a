"""Sending-or-not-sending twin-field QKD: detection model, Monte Carlo,
finite-key estimation and a truncated-Fock verification oracle."""
from .model import (
    ChannelParams,
    ConfigError,
    PhaseMode,
    ProtocolParams,
    UndefinedRateError,
    WindowClass,
    YieldSet,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "ConfigError",
    "PhaseMode",
    "ProtocolParams",
    "UndefinedRateError",
    "WindowClass",
    "YieldSet",
    "__version__",
]
