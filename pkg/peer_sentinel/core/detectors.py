"""
Per-peer anomaly detectors.

Three families share this module:

- syntactic checks compare each message's field paths against the required
  and optional fields of its message type (`check_syntax`), plus the two
  targeted detectors for omitted support flags and deprecated `last_seen`,
  and the signature-only TCP fragment pattern;
- content checks score exchanged peer lists for /24 diversity and for
  cross-source similarity;
- behavioral checks look at connection lifetime, Timed Sync pacing, Ping
  volume and the order of message types.

Every detector returns findings aggregated to one per (ip, category).
"""
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol

import numpy as np
from tqdm import tqdm

from ..formats.epee import ENTRY_MARKER, PATH_SEPARATOR, section_entries, section_paths
from ..formats.levin import BASE_COMMANDS
from ..utils.config import SIGNATURE_FRAGMENT_SIZE, TIMED_SYNC_INTERVAL, DetectorConfig
from ..utils.exceptions import BothEmpty, InsufficientData, NotAssessable, UnknownCommand
from ..utils.helpers import ip_sort_key, is_ipv4, setup_logger, sorted_ips, subnet24
from .connections import timed_sync_stats
from .types import (
    AnomalyCategory,
    AnomalyFinding,
    Command,
    Connection,
    Direction,
    Message,
    MessageKind,
    PeerList,
    Sender,
)

logger = setup_logger(__name__)


# ============================================================================
# Field Specifications
# ============================================================================
@dataclass(frozen=True)
class FieldSpec:
    """Required and optional field paths for one message type.

    `entries` maps an array-of-sections path to the spec each of its entries
    must satisfy; entry paths are reported as `<path>[].<entry path>`.
    """
    required: frozenset[str] = frozenset()
    optional: frozenset[str] = frozenset()
    entries: dict[str, "FieldSpec"] = field(default_factory=dict)

    def __post_init__(self):
        overlap = self.required & self.optional
        if overlap:
            raise ValueError(f"fields both required and optional: {sorted(overlap)}")

    @property
    def allowed(self) -> frozenset[str]:
        return self.required | self.optional


@dataclass(frozen=True)
class SyntaxViolation:
    missing: frozenset[str]
    unexpected: frozenset[str]


class _HasFields(Protocol):
    command: int
    kind: MessageKind
    fields: dict[str, Any]


PEER_LIST_PATH = "local_peerlist_new"

_NODE_DATA_REQUIRED = {"node_data.network_id", "node_data.my_port", "node_data.peer_id", "node_data.support_flags"}
_NODE_DATA_OPTIONAL = {"node_data.rpc_port", "node_data.rpc_credits_per_hash"}
_PAYLOAD_REQUIRED = {
    "payload_data.current_height",
    "payload_data.cumulative_difficulty",
    "payload_data.top_id",
    "payload_data.top_version",
}
_PAYLOAD_OPTIONAL = {"payload_data.cumulative_difficulty_top64", "payload_data.pruning_seed"}

PEER_ENTRY_SPEC = FieldSpec(
    required=frozenset({"adr.type", "id"}),
    optional=frozenset({
        "adr.addr.m_ip", "adr.addr.m_port",      # IPv4
        "adr.addr.addr",                          # IPv6
        "adr.addr.host", "adr.addr.port",         # tor / i2p
        "pruning_seed", "rpc_port", "rpc_credits_per_hash",
    }),
)

FIELD_SPECS: dict[tuple[int, MessageKind], FieldSpec] = {
    (Command.HANDSHAKE, MessageKind.REQUEST): FieldSpec(
        required=frozenset(_NODE_DATA_REQUIRED | _PAYLOAD_REQUIRED),
        optional=frozenset(_NODE_DATA_OPTIONAL | _PAYLOAD_OPTIONAL),
    ),
    (Command.HANDSHAKE, MessageKind.RESPONSE): FieldSpec(
        required=frozenset(_NODE_DATA_REQUIRED | _PAYLOAD_REQUIRED),
        optional=frozenset(_NODE_DATA_OPTIONAL | _PAYLOAD_OPTIONAL | {PEER_LIST_PATH}),
        entries={PEER_LIST_PATH: PEER_ENTRY_SPEC},
    ),
    (Command.TIMED_SYNC, MessageKind.REQUEST): FieldSpec(
        required=frozenset(_PAYLOAD_REQUIRED),
        optional=frozenset(_PAYLOAD_OPTIONAL),
    ),
    (Command.TIMED_SYNC, MessageKind.RESPONSE): FieldSpec(
        required=frozenset(_PAYLOAD_REQUIRED),
        optional=frozenset(_PAYLOAD_OPTIONAL | {PEER_LIST_PATH}),
        entries={PEER_LIST_PATH: PEER_ENTRY_SPEC},
    ),
    (Command.PING, MessageKind.REQUEST): FieldSpec(),
    (Command.PING, MessageKind.RESPONSE): FieldSpec(required=frozenset({"status", "peer_id"})),
    (Command.SUPPORT_FLAGS, MessageKind.REQUEST): FieldSpec(),
    (Command.SUPPORT_FLAGS, MessageKind.RESPONSE): FieldSpec(required=frozenset({"support_flags"})),
}


def _entry_domains(value: Any) -> list[set[str]]:
    """Field-path domain of every section entry in an array value."""
    return [set(section_paths(entry)) for entry in section_entries(value)]


def check_syntax(msg: _HasFields, spec: FieldSpec | None = None) -> SyntaxViolation | None:
    """
    Compare a message's field paths with the fields its type allows.

    A violation is returned when a required field is absent or a field
    outside required plus optional is present. Entries of peer-list arrays
    are checked against their own spec, their paths prefixed with the list
    path and `[]`.

    Raises:
        UnknownCommand: No spec exists for the message's command and kind
    """
    if spec is None:
        spec = FIELD_SPECS.get((msg.command, msg.kind))
        if spec is None:
            raise UnknownCommand(msg.command)

    domain = set(msg.fields)
    missing = set(spec.required - domain)
    unexpected = set(domain - spec.allowed)

    for path, entry_spec in spec.entries.items():
        if path not in msg.fields:
            continue
        prefix = f"{path}{ENTRY_MARKER}{PATH_SEPARATOR}"
        for entry_domain in _entry_domains(msg.fields[path]):
            missing.update(prefix + p for p in entry_spec.required - entry_domain)
            unexpected.update(prefix + p for p in entry_domain - entry_spec.allowed)

    if not missing and not unexpected:
        return None
    return SyntaxViolation(frozenset(missing), frozenset(unexpected))


def collect_syntax_violations(conns: Iterable[Connection]) -> list[dict]:
    """Tally violations per (remote ip, message type, violation shape) for the report."""
    tally: Counter = Counter()
    for c in conns:
        for m in c.remote_messages():
            if m.command not in BASE_COMMANDS or m.decode_error:
                continue
            violation = check_syntax(m)
            if violation is None:
                continue
            key = (c.remote_ip, Command(m.command).label, m.kind.value,
                   tuple(sorted(violation.missing)), tuple(sorted(violation.unexpected)))
            tally[key] += 1
    rows = [
        {"ip": ip, "command": cmd, "kind": kind, "missing": list(missing),
         "unexpected": list(unexpected), "count": n}
        for (ip, cmd, kind, missing, unexpected), n in tally.items()
    ]
    rows.sort(key=lambda r: (ip_sort_key(r["ip"]), r["command"], r["kind"], r["missing"], r["unexpected"]))
    return rows


# ============================================================================
# Finding Helpers
# ============================================================================
def _span(conns: list[Connection]) -> tuple[float, float]:
    return min(c.start_ts for c in conns), max(c.end_ts for c in conns)


def sort_findings(findings: Iterable[AnomalyFinding]) -> list[AnomalyFinding]:
    return sorted(findings, key=lambda f: (ip_sort_key(f.ip), f.category.order))


def _merge_evidence(a: dict, b: dict) -> dict:
    out = dict(a)
    for key, value in b.items():
        if key not in out:
            out[key] = value
        elif isinstance(value, bool) or isinstance(out[key], bool):
            out[key] = bool(out[key]) or bool(value)
        elif isinstance(value, int) and isinstance(out[key], int):
            out[key] = out[key] + value
        elif isinstance(value, (int, float)) and isinstance(out[key], (int, float)):
            out[key] = max(out[key], value)
        elif isinstance(value, list) and isinstance(out[key], list):
            merged = list(out[key]) + [v for v in value if v not in out[key]]
            out[key] = sorted(merged, key=str)
    return out


def merge_findings(findings: Iterable[AnomalyFinding]) -> list[AnomalyFinding]:
    """Collapse findings sharing (ip, category), aggregating evidence and widening the time span."""
    merged: dict[tuple, AnomalyFinding] = {}
    for f in findings:
        current = merged.get(f.key)
        if current is None:
            merged[f.key] = AnomalyFinding(f.ip, f.category, dict(f.evidence), f.first_seen, f.last_seen)
            continue
        current.evidence = _merge_evidence(current.evidence, f.evidence)
        firsts = [t for t in (current.first_seen, f.first_seen) if t is not None]
        lasts = [t for t in (current.last_seen, f.last_seen) if t is not None]
        current.first_seen = min(firsts) if firsts else None
        current.last_seen = max(lasts) if lasts else None
    return sort_findings(merged.values())


def _by_remote(conns: Iterable[Connection]) -> dict[str, list[Connection]]:
    out: dict[str, list[Connection]] = defaultdict(list)
    for c in conns:
        out[c.remote_ip].append(c)
    return out


# ============================================================================
# Syntactic Detectors
# ============================================================================
SUPPORT_FLAGS_PATH = "node_data.support_flags"


def detect_support_flags_omission(conns: Iterable[Connection]) -> list[AnomalyFinding]:
    """Peers whose handshakes leave out support_flags, or carry it as zero."""
    findings = []
    for ip, group in _by_remote(conns).items():
        omissions = explicit_zero = exchanges = 0
        times: list[float] = []
        for c in group:
            for m in c.remote_messages():
                if m.command == Command.SUPPORT_FLAGS and m.kind is MessageKind.RESPONSE:
                    exchanges += 1
                if m.command != Command.HANDSHAKE or m.decode_error:
                    continue
                if SUPPORT_FLAGS_PATH not in m.fields:
                    omissions += 1
                    times.append(m.ts)
                elif m.fields[SUPPORT_FLAGS_PATH] == 0:
                    explicit_zero += 1
                    times.append(m.ts)
        if omissions or explicit_zero:
            findings.append(AnomalyFinding(
                ip,
                AnomalyCategory.SUPPORT_FLAGS_OMISSION,
                {"omissions": omissions, "explicit_zero": explicit_zero, "support_flags_exchanges": exchanges},
                min(times),
                max(times),
            ))
    return sort_findings(findings)


def detect_deprecated_last_seen(peer_lists: Iterable[PeerList]) -> list[AnomalyFinding]:
    """Sources whose list entries still carry the removed last_seen field."""
    per_source: dict[str, dict[str, Any]] = {}
    for plist in peer_lists:
        values = [e.last_seen for e in plist.entries if e.last_seen is not None]
        if not values:
            continue
        agg = per_source.setdefault(plist.source_ip, {"lists": 0, "entries": 0, "values": set(), "ts": []})
        agg["lists"] += 1
        agg["entries"] += len(values)
        agg["values"].update(values)
        agg["ts"].append(plist.ts)

    findings = [
        AnomalyFinding(
            ip,
            AnomalyCategory.DEPRECATED_LAST_SEEN,
            {
                "lists": agg["lists"],
                "entries": agg["entries"],
                "distinct_values": len(agg["values"]),
                "sample_values": sorted(agg["values"])[:5],
            },
            min(agg["ts"]),
            max(agg["ts"]),
        )
        for ip, agg in per_source.items()
    ]
    return sort_findings(findings)


def detect_signature_only_fragments(conns: Iterable[Connection], cfg: DetectorConfig) -> list[AnomalyFinding]:
    """
    Peers that consistently send a first TCP segment holding only the Levin signature.

    Raises:
        NotAssessable: No message carries segment sizes
    """
    conns = list(conns)
    if not any(m.segment_lengths for c in conns for m in c.messages):
        raise NotAssessable("capture carries no TCP segment sizes")

    findings = []
    for ip, group in _by_remote(conns).items():
        multi = sig_only = 0
        times: list[float] = []
        for c in group:
            for m in c.remote_messages():
                if not m.segment_lengths or len(m.segment_lengths) < 2:
                    continue
                multi += 1
                if m.segment_lengths[0] == SIGNATURE_FRAGMENT_SIZE:
                    sig_only += 1
                    times.append(m.ts)
        if multi >= cfg.fragment_min_messages and sig_only >= cfg.fragment_min_ratio * multi:
            findings.append(AnomalyFinding(
                ip,
                AnomalyCategory.SIGNATURE_ONLY_FRAGMENT,
                {"multi_segment_messages": multi, "signature_only": sig_only, "ratio": round(sig_only / multi, 6)},
                min(times),
                max(times),
            ))
    return sort_findings(findings)


# ============================================================================
# Content Detectors
# ============================================================================
def _ipv4_subnets(plist: PeerList) -> list[str]:
    # IPv6 and anonymity-network entries stay out of /24 analytics
    return [subnet24(e.ip) for e in plist.entries if is_ipv4(e.ip)]


def peer_list_diversity(plist: PeerList, full_size: int = 250) -> float:
    """
    Ratio of distinct /24 subnets to IPv4 entries in a full list.

    Raises:
        NotAssessable: The list is not full, or holds no IPv4 entry
    """
    n = len(plist.entries)
    if n != full_size or n == 0:
        raise NotAssessable(f"list from {plist.source_ip} has {n} entries, not {full_size}")
    subnets = _ipv4_subnets(plist)
    if not subnets:
        raise NotAssessable(f"list from {plist.source_ip} has no IPv4 entries")
    return len(set(subnets)) / len(subnets)


def detect_low_diversity(peer_lists: Iterable[PeerList], cfg: DetectorConfig) -> list[AnomalyFinding]:
    stats: dict[str, dict[str, Any]] = {}
    for plist in peer_lists:
        try:
            diversity = peer_list_diversity(plist, cfg.full_list_size)
        except NotAssessable:
            continue
        agg = stats.setdefault(plist.source_ip, {"full": 0, "low": 0, "min": 1.0, "ts": []})
        agg["full"] += 1
        agg["min"] = min(agg["min"], diversity)
        if diversity < cfg.diversity_threshold:
            agg["low"] += 1
            agg["ts"].append(plist.ts)

    findings = [
        AnomalyFinding(
            ip,
            AnomalyCategory.LOW_DIVERSITY_PEER_LIST,
            {"min_diversity": round(agg["min"], 6), "low_lists": agg["low"], "full_lists": agg["full"]},
            min(agg["ts"]),
            max(agg["ts"]),
        )
        for ip, agg in stats.items()
        if agg["low"]
    ]
    return sort_findings(findings)


def jaccard(a: set, b: set) -> float:
    """
    Raises:
        BothEmpty: Both sets are empty
    """
    if not a and not b:
        raise BothEmpty("jaccard of two empty sets")
    union = len(a | b)
    return len(a & b) / union


def detect_similar_lists(
    peer_lists: Iterable[PeerList],
    cfg: DetectorConfig,
    progress: bool = False,
) -> list[AnomalyFinding]:
    """
    Sources that repeatedly send lists resembling another source's lists.

    Pairs are scored on /24-reduced sets of the IPv4 entries. Lists sharing
    no subnet have similarity 0, so candidate pairs come from an inverted
    subnet index and the intersection sizes it yields are exact.
    """
    full = [p for p in peer_lists if len(p.entries) == cfg.full_list_size]
    subnet_sets = [frozenset(_ipv4_subnets(p)) for p in full]
    raw_sets = [frozenset(e.ip for e in p.entries if is_ipv4(e.ip)) for p in full]

    index: dict[str, list[int]] = defaultdict(list)
    for i, subnets in enumerate(subnet_sets):
        for s in subnets:
            index[s].append(i)

    pair_counts: Counter = Counter()
    partners: dict[str, set[str]] = defaultdict(set)
    max_subnet: dict[str, float] = defaultdict(float)
    max_raw: dict[str, float] = defaultdict(float)
    times: dict[str, list[float]] = defaultdict(list)

    for i in tqdm(range(len(full)), desc="List similarity", unit="list", disable=not progress, leave=False):
        shared: Counter = Counter()
        for s in subnet_sets[i]:
            for j in index[s]:
                if j > i:
                    shared[j] += 1
        src_i = full[i].source_ip
        for j, inter in shared.items():
            src_j = full[j].source_ip
            if src_j == src_i:
                continue
            sim = inter / (len(subnet_sets[i]) + len(subnet_sets[j]) - inter)
            if sim <= cfg.similarity_threshold:
                continue
            raw = jaccard(raw_sets[i], raw_sets[j])
            for ip, other, ts in ((src_i, src_j, full[i].ts), (src_j, src_i, full[j].ts)):
                pair_counts[ip] += 1
                partners[ip].add(other)
                max_subnet[ip] = max(max_subnet[ip], sim)
                max_raw[ip] = max(max_raw[ip], raw)
                times[ip].append(ts)

    findings = [
        AnomalyFinding(
            ip,
            AnomalyCategory.HIGH_SIMILARITY_PEER_LIST,
            {
                "similar_pairs": count,
                "max_subnet_similarity": round(max_subnet[ip], 6),
                "max_raw_similarity": round(max_raw[ip], 6),
                "partners": sorted_ips(partners[ip]),
            },
            min(times[ip]),
            max(times[ip]),
        )
        for ip, count in pair_counts.items()
        if count >= cfg.similarity_min_repeats
    ]
    return sort_findings(findings)


# ============================================================================
# Behavioral Detectors
# ============================================================================
def detect_short_lived(conns: Iterable[Connection], cfg: DetectorConfig) -> list[AnomalyFinding]:
    """Peers opening many sub-second connections that still complete the handshake."""
    findings = []
    for ip, group in _by_remote(conns).items():
        short = [c for c in group if c.complete and c.handshake_completed and c.duration < cfg.short_lived_max]
        if len(short) > cfg.short_lived_peer_min:
            start, end = _span(short)
            findings.append(AnomalyFinding(
                ip,
                AnomalyCategory.SHORT_LIVED_FLOODING,
                {
                    "short_lived_connections": len(short),
                    "mean_duration": round(float(np.mean([c.duration for c in short])), 6),
                },
                start,
                end,
            ))
    return sort_findings(findings)


def short_lived_without_handshake(conns: Iterable[Connection], cfg: DetectorConfig) -> dict[str, int]:
    """Per-ip count of sub-second connections that never completed the handshake."""
    counts: Counter = Counter()
    for c in conns:
        if c.complete and not c.handshake_completed and c.duration < cfg.short_lived_max:
            counts[c.remote_ip] += 1
    return dict(counts)


def short_lived_top(conns: Iterable[Connection], cfg: DetectorConfig, top_k: int) -> list[dict]:
    counts: Counter = Counter(
        c.remote_ip for c in conns if c.complete and c.duration < cfg.short_lived_max
    )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], ip_sort_key(kv[0])))
    return [{"ip": ip, "connections": n} for ip, n in ranked[:top_k]]


def timed_sync_deviates(mean_interval: float, cfg: DetectorConfig) -> bool:
    """
    A remote Timed Sync mean interval counts as throttled when it exceeds the
    throttle line and sits more than `timing_tolerance` away from the expected
    Timed Sync period.
    """
    expected = cfg.timing_standard.get("timed_sync", TIMED_SYNC_INTERVAL)
    return mean_interval > cfg.throttle_threshold and abs(mean_interval - expected) > cfg.timing_tolerance


def detect_throttled_timed_sync(conns: Iterable[Connection], cfg: DetectorConfig) -> list[AnomalyFinding]:
    """Long-lived connections whose peer requests Timed Sync far less often than the 60 s loop."""
    flagged: dict[str, list[tuple[Connection, float]]] = defaultdict(list)
    for c in conns:
        if c.duration < cfg.throttle_min_duration:
            continue
        try:
            mean = timed_sync_stats(c).mean_remote_interval
        except InsufficientData:
            continue
        if timed_sync_deviates(mean, cfg):
            flagged[c.remote_ip].append((c, mean))

    findings = []
    for ip, items in flagged.items():
        group = [c for c, _ in items]
        start, end = _span(group)
        findings.append(AnomalyFinding(
            ip,
            AnomalyCategory.THROTTLED_TIMED_SYNC,
            {
                "flagged_connections": len(items),
                "mean_intervals": {c.id: round(mean, 6) for c, mean in sorted(items, key=lambda t: t[0].id)},
            },
            start,
            end,
        ))
    return sort_findings(findings)


def _remote_pings(conn: Connection) -> list[float]:
    return [m.ts for m in conn.messages if m.is_(Command.PING, MessageKind.REQUEST, Sender.REMOTE)]


def is_ping_flood(conn: Connection, cfg: DetectorConfig) -> bool:
    if conn.direction is not Direction.INCOMING:
        return False
    pings = _remote_pings(conn)
    if len(pings) < cfg.ping_flood_min_pings:
        return False
    return float(np.mean(np.diff(pings))) < cfg.ping_flood_max_mean_gap


def _first_local_timed_sync_unanswered(conn: Connection) -> bool:
    msgs = conn.messages
    for i, m in enumerate(msgs):
        if m.is_(Command.TIMED_SYNC, MessageKind.REQUEST, Sender.LOCAL):
            return not any(n.is_(Command.TIMED_SYNC, MessageKind.RESPONSE, Sender.REMOTE) for n in msgs[i + 1:])
    return False


def _silent_after_burst(conn: Connection) -> bool:
    """The peer sent nothing but Pings once the handshake was done."""
    after = [m for m in conn.remote_messages() if m.command != Command.HANDSHAKE]
    return bool(after) and all(m.command == Command.PING for m in after)


def detect_ping_flooding(conns: Iterable[Connection], cfg: DetectorConfig) -> list[AnomalyFinding]:
    """Incoming connections on which the peer bursts Ping requests."""
    flagged: dict[str, list[Connection]] = defaultdict(list)
    for c in conns:
        if is_ping_flood(c, cfg):
            flagged[c.remote_ip].append(c)

    findings = []
    for ip, group in flagged.items():
        counts = [len(_remote_pings(c)) for c in group]
        gaps = [float(np.mean(np.diff(_remote_pings(c)))) for c in group]
        start, end = _span(group)
        findings.append(AnomalyFinding(
            ip,
            AnomalyCategory.PING_FLOODING,
            {
                "flagged_connections": len(group),
                "pings": sum(counts),
                "max_pings_per_connection": max(counts),
                "min_mean_gap": round(min(gaps), 6),
                "timed_sync_unanswered": any(_first_local_timed_sync_unanswered(c) for c in group),
                "silent_after_burst": any(_silent_after_burst(c) for c in group),
            },
            start,
            end,
        ))
    return sort_findings(findings)


def _other(sender: Sender) -> Sender:
    return Sender.REMOTE if sender is Sender.LOCAL else Sender.LOCAL


def sequence_violation(conn: Connection, cfg: DetectorConfig) -> str | None:
    """
    Walk the base-command messages of a connection through the standard template.

    Returns the first deviation as a short reason, or None when the sequence
    conforms: handshake pair first, then at most one Ping pair and one
    Support Flags pair, and Timed Sync exchanges in any interleaving. Requests
    still unanswered when the capture ends are not deviations.
    """
    skip_pings = is_ping_flood(conn, cfg)
    msgs: list[Message] = [
        m for m in conn.messages
        if m.command in BASE_COMMANDS and not (skip_pings and m.command == Command.PING)
    ]
    if not msgs:
        return None
    first = msgs[0]
    if not first.is_(Command.HANDSHAKE, MessageKind.REQUEST):
        return f"{Command(first.command).label} {first.kind.value} before handshake"
    if len(msgs) < 2:
        return None
    if not msgs[1].is_(Command.HANDSHAKE, MessageKind.RESPONSE, _other(first.sender)):
        return f"{Command(msgs[1].command).label} {msgs[1].kind.value} before handshake response"

    allowed = set(cfg.standard_sequences)
    limits = {Command.PING: 1, Command.SUPPORT_FLAGS: 1}
    phase = {Command.PING: "ping", Command.SUPPORT_FLAGS: "support_flags", Command.TIMED_SYNC: "timed_sync"}
    seen: Counter = Counter()
    pending: Counter = Counter()
    for m in msgs[2:]:
        command = Command(m.command)
        if command is Command.HANDSHAKE:
            return "repeated handshake"
        if phase[command] not in allowed:
            return f"{command.label} outside the standard template"
        if m.kind is MessageKind.REQUEST:
            seen[command] += 1
            if command in limits and seen[command] > limits[command]:
                return f"repeated {command.label} request"
            pending[(command, m.sender)] += 1
        else:
            key = (command, _other(m.sender))
            if pending[key] == 0:
                return f"unsolicited {command.label} response"
            pending[key] -= 1
    return None


def detect_sequence_violations(conns: Iterable[Connection], cfg: DetectorConfig) -> list[AnomalyFinding]:
    flagged: dict[str, list[tuple[Connection, str]]] = defaultdict(list)
    for c in conns:
        if not c.handshake_completed:
            continue
        reason = sequence_violation(c, cfg)
        if reason is not None:
            flagged[c.remote_ip].append((c, reason))

    findings = []
    for ip, items in flagged.items():
        group = [c for c, _ in items]
        start, end = _span(group)
        findings.append(AnomalyFinding(
            ip,
            AnomalyCategory.SEQUENCE_VIOLATION,
            {
                "violating_connections": len(items),
                "reasons": sorted({reason for _, reason in items}),
            },
            start,
            end,
        ))
    return sort_findings(findings)
