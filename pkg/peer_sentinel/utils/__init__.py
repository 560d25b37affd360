"""
Utilities package for peer-sentinel.

Configuration constants, typed settings, the exception hierarchy and helpers.
"""

from .helpers import (
    setup_logger,
    ensure_directory_exists,
    validate_file_exists,
    subnet24,
    sorted_ips,
)

from .config import (
    PEER_LIST_MAX,
    INACTIVITY_DROP,
    TIMED_SYNC_INTERVAL,
    DetectorConfig,
    AnalysisConfig,
)

from .exceptions import (
    PeerSentinelError,
    ConfigError,
)

from .settings import load_config

__all__ = [
    # Helpers
    "setup_logger",
    "ensure_directory_exists",
    "validate_file_exists",
    "subnet24",
    "sorted_ips",
    # Config
    "PEER_LIST_MAX",
    "INACTIVITY_DROP",
    "TIMED_SYNC_INTERVAL",
    "DetectorConfig",
    "AnalysisConfig",
    # Exceptions
    "PeerSentinelError",
    "ConfigError",
    # Settings
    "load_config",
]
