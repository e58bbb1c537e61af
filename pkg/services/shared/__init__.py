"""
Shared utilities for the robust-MDP services.
"""

from services.shared.config import Settings, get_settings
from services.shared.logging import bind_run, configure_logging, get_logger

__all__ = [
    "Settings",
    "get_settings",
    "bind_run",
    "configure_logging",
    "get_logger",
]
