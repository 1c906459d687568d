"""Configuration module for ditforge."""

from ditforge.config.env import load_runtime_env
from ditforge.config.loader import get_config_path, load_config, save_config
from ditforge.config.schema import (
    BalancerSettings,
    EmulatorSettings,
    RpcSettings,
    Settings,
    TelemetrySettings,
)

__all__ = [
    "BalancerSettings",
    "EmulatorSettings",
    "RpcSettings",
    "Settings",
    "TelemetrySettings",
    "get_config_path",
    "load_config",
    "load_runtime_env",
    "save_config",
]
