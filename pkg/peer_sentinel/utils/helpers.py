"""
Peer Sentinel Utility Functions

Common utility functions used across the application.
"""
import ipaddress
import logging
from pathlib import Path

from .exceptions import InputNotFoundError


# ============================================================================
# Address Utilities
# ============================================================================
def parse_ipv4(text: str) -> ipaddress.IPv4Address | None:
    """Parse a dotted-quad address; anything else (IPv6, onion, garbage) gives None."""
    try:
        return ipaddress.IPv4Address(text)
    except (ipaddress.AddressValueError, ValueError, TypeError):
        return None


def is_ipv4(text: str) -> bool:
    return parse_ipv4(text) is not None


def is_valid_unicast(text: str) -> bool:
    """True for IPv4 addresses a peer could legitimately announce."""
    addr = parse_ipv4(text)
    if addr is None:
        return False
    return not (addr.is_loopback or addr.is_multicast or addr.is_unspecified or addr.is_reserved
                or addr == ipaddress.IPv4Address("255.255.255.255"))


def subnet24(ip: str) -> str:
    """Return the /24 CIDR for an IPv4 address, or the text itself for opaque addresses."""
    addr = parse_ipv4(ip)
    if addr is None:
        return ip
    return str(ipaddress.IPv4Network(f"{addr}/24", strict=False))


def ip_sort_key(ip: str) -> tuple[int, int, str]:
    """Numeric order for IPv4, opaque addresses after them in text order."""
    addr = parse_ipv4(ip)
    if addr is None:
        return (1, 0, ip)
    return (0, int(addr), "")


def sorted_ips(ips) -> list[str]:
    return sorted(ips, key=ip_sort_key)


def uint32_to_ip(value: int) -> str:
    """Decode the reference client's m_ip: network-order octets read as a little-endian integer."""
    return str(ipaddress.IPv4Address(int(value).to_bytes(4, "little")))


def ip_to_uint32(ip: str) -> int:
    return int.from_bytes(ipaddress.IPv4Address(ip).packed, "little")


# ============================================================================
# Path Utilities
# ============================================================================
def ensure_directory_exists(path: str | Path) -> Path:
    """Ensure a directory exists, creating it if necessary."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def validate_file_exists(filepath: str | Path) -> Path:
    """
    Validate that a file exists.

    Raises:
        InputNotFoundError: If the file doesn't exist
    """
    p = Path(filepath)
    if not p.exists():
        raise InputNotFoundError(f"File not found: {filepath}")
    if not p.is_file():
        raise InputNotFoundError(f"Path is not a file: {filepath}")
    return p


# ============================================================================
# String Utilities
# ============================================================================
def format_duration(seconds: float) -> str:
    """Format seconds into a human-readable duration string."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        mins = int(seconds // 60)
        secs = int(seconds % 60)
        return f"{mins}m {secs}s"
    else:
        hours = int(seconds // 3600)
        mins = int((seconds % 3600) // 60)
        return f"{hours}h {mins}m"


# ============================================================================
# Logging Utilities
# ============================================================================
PACKAGE_LOGGER = "peer_sentinel"


def setup_logger(name: str, level: str | None = None) -> logging.Logger:
    """
    Setup a logger with consistent formatting.

    The stream handler is attached once to the package logger so module
    loggers share it; the CLI swaps it for a Rich handler.

    Args:
        name: Logger name
        level: Optional logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        Configured logger instance
    """
    from .config import LOG_FORMAT, LOG_DATE_FORMAT

    package = logging.getLogger(PACKAGE_LOGGER)
    if not package.handlers and not logging.getLogger().handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT))
        package.addHandler(handler)
        package.setLevel(logging.INFO)

    logger = logging.getLogger(name)
    if level:
        logger.setLevel(getattr(logging, level.upper()))
    return logger
