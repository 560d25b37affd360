"""
Peer Sentinel Core Type Definitions

Provides enums and dataclasses shared by the ingest, detection and report
stages. Centralizes type definitions to avoid circular imports between modules.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from ..formats.levin import Command, MessageKind
from ..utils.config import PEER_LIST_MAX
from ..utils.helpers import sorted_ips

__all__ = [
    "Command",
    "MessageKind",
    "Sender",
    "Direction",
    "Carrier",
    "IdSource",
    "AnomalyCategory",
    "PacketRecord",
    "PeerListEntry",
    "PeerList",
    "Message",
    "Connection",
    "TimedSyncStats",
    "AnomalyFinding",
    "IdObservation",
    "IdCluster",
    "PeerProfile",
    "OverlapMatrix",
]


class Sender(str, Enum):
    LOCAL = "local"
    REMOTE = "remote"


class Direction(str, Enum):
    """Connection direction, seen from the measurement node."""
    INCOMING = "incoming"
    OUTGOING = "outgoing"


class Carrier(str, Enum):
    """Message type that carried a peer list."""
    HANDSHAKE_RESPONSE = "handshake-response"
    TIMED_SYNC_RESPONSE = "timed-sync-response"
    OTHER = "other"


class IdSource(str, Enum):
    HANDSHAKE = "handshake"
    PONG = "pong"
    PEER_LIST_ENTRY = "peer-list-entry"


class AnomalyCategory(str, Enum):
    """Every category a detector can emit, in report order."""
    SUPPORT_FLAGS_OMISSION = "SupportFlagsOmission"
    DEPRECATED_LAST_SEEN = "DeprecatedLastSeen"
    SIGNATURE_ONLY_FRAGMENT = "SignatureOnlyFragment"
    LOW_DIVERSITY_PEER_LIST = "LowDiversityPeerList"
    HIGH_SIMILARITY_PEER_LIST = "HighSimilarityPeerList"
    SHORT_LIVED_FLOODING = "ShortLivedFlooding"
    THROTTLED_TIMED_SYNC = "ThrottledTimedSync"
    PING_FLOODING = "PingFlooding"
    SEQUENCE_VIOLATION = "SequenceViolation"
    PEER_ID_TEMPORAL = "PeerIdTemporal"
    PEER_ID_CLUSTER = "PeerIdCluster"
    SATURATED_SUBNET_MEMBER = "SaturatedSubnetMember"

    @classmethod
    def from_string(cls, value: str) -> "AnomalyCategory":
        try:
            return cls(value)
        except ValueError:
            pass
        for member in cls:
            if member.name.lower() == value.lower() or member.value.lower() == value.lower():
                return member
        raise ValueError(f"unknown anomaly category: {value}")

    @property
    def order(self) -> int:
        return list(AnomalyCategory).index(self)


# ============================================================================
# Capture Records
# ============================================================================
@dataclass
class PacketRecord:
    """One normalized protocol message as observed on the wire."""
    ts: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    command: int
    kind: MessageKind
    fields: dict[str, Any] = field(default_factory=dict)
    stream_id: Optional[int] = None
    segment_lengths: Optional[list[int]] = None
    decode_error: Optional[str] = None

    @property
    def endpoints(self) -> tuple[str, str]:
        return self.src_ip, self.dst_ip

    @property
    def five_tuple(self) -> tuple:
        """Direction-independent session key."""
        a = (self.src_ip, self.src_port)
        b = (self.dst_ip, self.dst_port)
        return tuple(sorted((a, b)))

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        d: dict[str, Any] = {
            "ts": self.ts,
            "src_ip": self.src_ip,
            "src_port": self.src_port,
            "dst_ip": self.dst_ip,
            "dst_port": self.dst_port,
            "stream_id": self.stream_id,
            "command": int(self.command),
            "kind": self.kind.value,
            "fields": self.fields,
        }
        if self.segment_lengths is not None:
            d["segment_lengths"] = list(self.segment_lengths)
        if self.decode_error is not None:
            d["decode_error"] = self.decode_error
        return d


@dataclass
class PeerListEntry:
    """One promoted peer inside an exchanged list."""
    ip: str
    port: int
    peer_id: Optional[int] = None
    last_seen: Optional[int] = None
    pruning_seed: Optional[int] = None
    rpc_port: Optional[int] = None
    rpc_credits_per_hash: Optional[int] = None
    valid: bool = True

    def to_dict(self) -> dict:
        d = {"ip": self.ip, "port": self.port, "valid": self.valid}
        for name in ("peer_id", "last_seen", "pruning_seed", "rpc_port", "rpc_credits_per_hash"):
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        return d


@dataclass
class PeerList:
    source_ip: str
    ts: float
    carrier: Carrier
    entries: list[PeerListEntry] = field(default_factory=list)
    stream_id: Optional[int] = None
    # entries dropped above the 250-entry cap
    truncated: int = 0

    @property
    def is_full(self) -> bool:
        return len(self.entries) == PEER_LIST_MAX

    @property
    def invalid_count(self) -> int:
        return sum(1 for e in self.entries if not e.valid)

    @property
    def ips(self) -> list[str]:
        return [e.ip for e in self.entries]


# ============================================================================
# Connections
# ============================================================================
@dataclass
class Message:
    ts: float
    command: int
    kind: MessageKind
    sender: Sender
    fields: dict[str, Any] = field(default_factory=dict)
    segment_lengths: Optional[list[int]] = None
    decode_error: Optional[str] = None

    def is_(self, command: Command, kind: MessageKind, sender: Sender | None = None) -> bool:
        return self.command == command and self.kind is kind and (sender is None or self.sender is sender)


@dataclass
class Connection:
    """A time-ordered message sequence between the measurement node and one remote endpoint."""
    id: str
    local_ip: str
    remote_ip: str
    remote_port: int
    direction: Direction
    start_ts: float
    end_ts: float
    local_port: int = 0
    messages: list[Message] = field(default_factory=list)
    handshake_completed: bool = False
    complete: bool = False
    source: str = ""

    @property
    def duration(self) -> float:
        return self.end_ts - self.start_ts

    @property
    def decode_errors(self) -> int:
        return sum(1 for m in self.messages if m.decode_error)

    def remote_messages(self) -> list[Message]:
        return [m for m in self.messages if m.sender is Sender.REMOTE]


@dataclass
class TimedSyncStats:
    request_intervals_local: list[float]
    request_intervals_remote: list[float]
    mean_remote_interval: float
    count_remote_requests: int


# ============================================================================
# Findings
# ============================================================================
@dataclass
class AnomalyFinding:
    """One (ip, category) classification with aggregated evidence."""
    ip: str
    category: AnomalyCategory
    evidence: dict[str, Any]
    first_seen: Optional[float] = None
    last_seen: Optional[float] = None

    def __post_init__(self):
        if not self.evidence:
            raise ValueError(f"finding {self.category.value} for {self.ip} has no evidence")

    @property
    def key(self) -> tuple[str, AnomalyCategory]:
        return self.ip, self.category

    def to_dict(self, with_times: bool = True) -> dict:
        d: dict[str, Any] = {
            "ip": self.ip,
            "category": self.category.value,
            "evidence": self.evidence,
        }
        if with_times:
            d["first_seen"] = self.first_seen
            d["last_seen"] = self.last_seen
        return d


@dataclass(frozen=True)
class IdObservation:
    ts: float
    ip: str
    peer_id: int
    source: IdSource

    def __post_init__(self):
        if self.peer_id == 0:
            raise ValueError("peer id 0 means absent")


@dataclass
class IdCluster:
    """A connected component of the IP-ID graph with at least two of each."""
    ips: frozenset[str]
    ids: frozenset[int]
    edge_count: int
    asns: frozenset[int] = frozenset()

    def to_dict(self) -> dict:
        return {
            "ips": sorted_ips(self.ips),
            "ids": [f"{i:016x}" for i in sorted(self.ids)],
            "edge_count": self.edge_count,
            "asn_diversity": len(self.asns),
        }


# ============================================================================
# Report Aggregates
# ============================================================================
@dataclass
class PeerProfile:
    ip: str
    subnet: str
    asn: int = 0
    org: str = "unknown"
    categories: dict[AnomalyCategory, dict[str, Any]] = field(default_factory=dict)
    connection_count: int = 0
    durations: list[float] = field(default_factory=list)
    ids: set[int] = field(default_factory=set)
    connected: bool = False
    promoted: bool = False

    @property
    def flagged(self) -> bool:
        return bool(self.categories)

    def to_dict(self) -> dict:
        ordered = sorted(self.categories, key=lambda c: c.order)
        return {
            "ip": self.ip,
            "subnet": self.subnet,
            "asn": self.asn,
            "org": self.org,
            "categories": [c.value for c in ordered],
            "connection_count": self.connection_count,
            "total_duration": sum(self.durations),
            "max_duration": max(self.durations, default=0.0),
            "ids": [f"{i:016x}" for i in sorted(self.ids)],
            "connected": self.connected,
            "promoted": self.promoted,
            "flagged": self.flagged,
        }


@dataclass
class OverlapMatrix:
    """Symmetric category-by-category overlap counts at ip and AS level."""
    categories: list[str]
    ip_matrix: list[list[int]]
    as_matrix: list[list[int]]

    def cell(self, a: str, b: str, level: str = "ip") -> int:
        i, j = self.categories.index(a), self.categories.index(b)
        matrix = self.ip_matrix if level == "ip" else self.as_matrix
        return matrix[i][j]

    def to_dict(self) -> dict:
        return {"categories": self.categories, "ip": self.ip_matrix, "as": self.as_matrix}
