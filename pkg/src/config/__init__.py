"""
Configuration module initialization.
"""

from .loader import dump_config, load_config, locate_key, read_config, validate_config
from .settings import Settings, get_settings

__all__ = [
    "dump_config",
    "load_config",
    "locate_key",
    "read_config",
    "validate_config",
    "Settings",
    "get_settings",
]
