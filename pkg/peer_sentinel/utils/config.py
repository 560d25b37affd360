"""
Peer Sentinel Configuration Module

Centralizes protocol constants, embedded defaults and the typed
configuration objects used by the analysis pipeline.
"""
from dataclasses import dataclass, field, fields, asdict
from typing import Any

from .exceptions import ConfigError


# ============================================================================
# Levin / epee Constants
# ============================================================================
# Values from the Monero reference client:
#   contrib/epee/include/net/levin_base.h
#   contrib/epee/include/storages/portable_storage_base.h
#   src/p2p/p2p_protocol_defs.h
#   src/cryptonote_protocol/cryptonote_protocol_defs.h
LEVIN_SIGNATURE = 0x0101010101012101          # bytes 01 21 01 01 01 01 01 01 on the wire
LEVIN_HEADER_SIZE = 33
LEVIN_PACKET_REQUEST = 0x00000001
LEVIN_PACKET_RESPONSE = 0x00000002
LEVIN_PROTOCOL_VER_1 = 1

PORTABLE_STORAGE_SIGNATUREA = 0x01011101      # bytes 01 11 01 01
PORTABLE_STORAGE_SIGNATUREB = 0x01020101      # bytes 01 01 02 01
PORTABLE_STORAGE_FORMAT_VER = 1

DEFAULT_MAX_PAYLOAD = 100 * 1024 * 1024
DEFAULT_MAX_DEPTH = 16


# ============================================================================
# Protocol Behaviour
# ============================================================================
INACTIVITY_DROP = 120.0         # idle connections are dropped after this many seconds
TIMED_SYNC_INTERVAL = 60.0
PEER_LIST_MAX = 250
SIGNATURE_FRAGMENT_SIZE = 8     # a first segment holding only the Levin signature


# ============================================================================
# Report Defaults
# ============================================================================
REPORT_SCHEMA_VERSION = 1
DEFAULT_SATURATION_THRESHOLD = 100
DEFAULT_BUCKET_SECONDS = 60.0
DEFAULT_TOP_K = 10

REPORT_FILE = "report.json"
FINDINGS_FILE = "findings.json"
BANLIST_FILE = "banlist.txt"
SUMMARY_FILE = "summary.txt"


# ============================================================================
# Logging Configuration
# ============================================================================
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


# ============================================================================
# Detector Configuration
# ============================================================================
@dataclass
class DetectorConfig:
    """Thresholds for the per-peer detectors."""
    diversity_threshold: float = 0.04
    similarity_threshold: float = 0.3
    similarity_min_repeats: int = 2
    short_lived_max: float = 1.0
    short_lived_peer_min: int = 10
    throttle_threshold: float = 90.0
    throttle_min_duration: float = 600.0
    ping_flood_min_pings: int = 20
    ping_flood_max_mean_gap: float = 5.0
    full_list_size: int = PEER_LIST_MAX
    fragment_min_messages: int = 5
    fragment_min_ratio: float = 0.9
    # optional phases the standard connection template may contain
    standard_sequences: tuple[str, ...] = ("handshake", "ping", "support_flags", "timed_sync")
    timing_standard: dict[str, float] = field(default_factory=lambda: {"timed_sync": TIMED_SYNC_INTERVAL})
    timing_tolerance: float = 30.0

    def validate(self) -> "DetectorConfig":
        """Check value ranges, raising ConfigError on the first violation."""
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
                raise ConfigError(f"{f.name} must be strictly positive, got {value}")
        for name in ("diversity_threshold", "similarity_threshold", "fragment_min_ratio"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        unknown = set(self.standard_sequences) - {"handshake", "ping", "support_flags", "timed_sync"}
        if unknown:
            raise ConfigError(f"unknown sequence phases: {', '.join(sorted(unknown))}")
        if "handshake" not in self.standard_sequences or "timed_sync" not in self.standard_sequences:
            raise ConfigError("standard_sequences must contain 'handshake' and 'timed_sync'")
        for command, interval in self.timing_standard.items():
            if interval <= 0:
                raise ConfigError(f"timing_standard[{command}] must be strictly positive")
        return self


# ============================================================================
# Analysis Configuration
# ============================================================================
@dataclass
class AnalysisConfig:
    """Pipeline-wide settings wrapping the detector thresholds."""
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    session_gap: float = INACTIVITY_DROP
    saturation_threshold: int = DEFAULT_SATURATION_THRESHOLD
    bucket_seconds: float = DEFAULT_BUCKET_SECONDS
    top_k: int = DEFAULT_TOP_K
    max_payload: int = DEFAULT_MAX_PAYLOAD
    max_depth: int = DEFAULT_MAX_DEPTH
    trust_list_ids: bool = False

    def validate(self) -> "AnalysisConfig":
        self.detectors.validate()
        for name in ("session_gap", "saturation_threshold", "bucket_seconds", "top_k", "max_payload", "max_depth"):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigError(f"{name} must be strictly positive, got {value}")
        return self

    def to_flat_dict(self) -> dict[str, Any]:
        """Flatten to the key = value form used by config files."""
        flat = {k: v for k, v in asdict(self).items() if k != "detectors"}
        flat.update(asdict(self.detectors))
        flat["standard_sequences"] = list(self.detectors.standard_sequences)
        return flat


# One-line description for each key, printed by `config --defaults`.
CONFIG_DOCS: dict[str, str] = {
    "diversity_threshold": "flag full lists whose unique /24 ratio is strictly below this (fewer than 10 subnets of 250)",
    "similarity_threshold": "subnet-reduced Jaccard above this counts as a similar pair; 99% of honest pairs sit below 0.2",
    "similarity_min_repeats": "a source must show that many similar pairs to count as persistent",
    "short_lived_max": "connections shorter than this many seconds are short-lived",
    "short_lived_peer_min": "flag an ip with strictly more short-lived handshake-completed connections than this",
    "throttle_threshold": "flag connections whose mean remote Timed Sync interval exceeds this (60 s loop + tolerance)",
    "throttle_min_duration": "only connections lasting at least this long are assessed for throttling",
    "ping_flood_min_pings": "an incoming connection needs at least this many remote Pings to count as flooding",
    "ping_flood_max_mean_gap": "...and a mean gap between those Pings below this many seconds",
    "full_list_size": "peer lists of exactly this size are full",
    "fragment_min_messages": "minimum multi-segment messages before signature-only fragmentation is judged",
    "fragment_min_ratio": "share of multi-segment messages whose first segment is the bare 8-octet signature",
    "standard_sequences": "phases allowed in a standard connection template",
    "timing_standard": "expected interval per periodic command",
    "timing_tolerance": "a throttled mean interval must also differ from timing_standard by more than this",
    "session_gap": "split 5-tuple sessions at silences longer than the protocol's inactivity drop",
    "saturation_threshold": "a /24 with at least this many distinct ips is saturated",
    "bucket_seconds": "exposure timeline bucket width",
    "top_k": "entries listed in top-k tables",
    "max_payload": "largest Levin payload the decoder accepts",
    "max_depth": "deepest nested epee section the decoder accepts",
    "trust_list_ids": "let peer ids seen in third-party peer-list entries drive identity findings",
}

# Where each default comes from: the reference client's sources, or the
# honest-peer baseline measured on mainnet captures.
CONFIG_SOURCES: dict[str, str] = {
    "diversity_threshold": "measured baseline, content anomalies: peer-list /24 diversity",
    "similarity_threshold": "measured baseline, content anomalies: pairwise subnet Jaccard of exchanged lists",
    "similarity_min_repeats": "content anomalies: persistence over repeated exchanges",
    "short_lived_max": "behavioral anomalies: connection duration baseline",
    "short_lived_peer_min": "behavioral anomalies: connection duration baseline",
    "throttle_threshold": "src/cryptonote_config.h P2P_DEFAULT_HANDSHAKE_INTERVAL (60 s) plus timing_tolerance",
    "throttle_min_duration": "behavioral anomalies: at least ten Timed Sync periods",
    "ping_flood_min_pings": "behavioral anomalies: reachability Pings are sent once per handshake",
    "ping_flood_max_mean_gap": "behavioral anomalies: reachability Pings are sent once per handshake",
    "full_list_size": "src/cryptonote_config.h P2P_DEFAULT_PEERS_IN_HANDSHAKE (250)",
    "fragment_min_messages": "syntactic anomalies: TCP segmentation of Levin frames",
    "fragment_min_ratio": "contrib/epee/include/net/levin_base.h LEVIN_SIGNATURE (8 octets)",
    "standard_sequences": "src/p2p/net_node.inl handshake, ping and support-flags exchanges",
    "timing_standard": "src/cryptonote_config.h P2P_DEFAULT_HANDSHAKE_INTERVAL (60 s)",
    "timing_tolerance": "behavioral anomalies: timing deviation tolerance",
    "session_gap": "reference client idle connection drop (120 s)",
    "saturation_threshold": "network structure: /24 subnets filled with promoted addresses",
    "bucket_seconds": "exposure over time: one Timed Sync period per bucket",
    "top_k": "report layout",
    "max_payload": "contrib/epee/include/net/levin_base.h LEVIN_DEFAULT_MAX_PACKET_SIZE (100 MB)",
    "max_depth": "contrib/epee/include/storages/portable_storage_from_bin.h, stricter recursion limit",
    "trust_list_ids": "identity analysis: ids in list entries are third-party claims",
}
