"""
Connection model: grouping records into per-peer connections and the
timing statistics derived from them.
"""
from collections import defaultdict
from typing import Iterable, Optional

import numpy as np

from ..formats.levin import BASE_COMMANDS
from ..utils.config import INACTIVITY_DROP
from ..utils.exceptions import AmbiguousLocalIp, InsufficientData
from ..utils.helpers import setup_logger
from .types import (
    Command,
    Connection,
    Direction,
    Message,
    MessageKind,
    PacketRecord,
    Sender,
    TimedSyncStats,
)

logger = setup_logger(__name__)


def infer_local_ip(records: list[PacketRecord]) -> str:
    """
    The measurement node is the one endpoint present in every record.

    Raises:
        AmbiguousLocalIp: No common endpoint, or more than one
    """
    candidates: Optional[set[str]] = None
    for r in records:
        ends = {r.src_ip, r.dst_ip}
        candidates = ends if candidates is None else candidates & ends
        if not candidates:
            break
    if not candidates:
        raise AmbiguousLocalIp("no endpoint is common to every record; pass the local ip explicitly")
    if len(candidates) > 1:
        raise AmbiguousLocalIp(
            f"both {' and '.join(sorted(candidates))} appear in every record; pass the local ip explicitly"
        )
    return next(iter(candidates))


def group_connections(
    records: Iterable[PacketRecord],
    local_ip: Optional[str] = None,
    session_gap: float = INACTIVITY_DROP,
    source: str = "",
) -> list[Connection]:
    """
    Group time-ordered records into connections.

    Records with a stream_id group by it. Records without one group by their
    5-tuple, split into separate sessions wherever the 5-tuple is silent for
    longer than `session_gap`.
    """
    records = list(records)
    if not records:
        return []
    if local_ip is None:
        local_ip = infer_local_ip(records)
        logger.debug(f"inferred local ip {local_ip}")

    capture_end = max(r.ts for r in records)
    groups: dict[tuple, list[PacketRecord]] = defaultdict(list)
    last_seen: dict[tuple, float] = {}
    epochs: dict[tuple, int] = defaultdict(int)
    foreign = 0

    for r in records:
        if local_ip not in (r.src_ip, r.dst_ip):
            foreign += 1
            continue
        if r.stream_id is not None:
            key: tuple = ("stream", r.stream_id)
        else:
            ft = r.five_tuple
            if ft in last_seen and r.ts - last_seen[ft] > session_gap:
                epochs[ft] += 1
            last_seen[ft] = r.ts
            key = ("tuple", ft, epochs[ft])
        groups[key].append(r)

    if foreign:
        logger.warning(f"{foreign} records do not involve local ip {local_ip} and were ignored")

    conns = [_build_connection(key, recs, local_ip, session_gap, capture_end, source) for key, recs in groups.items()]
    conns.sort(key=lambda c: (c.start_ts, c.id))
    return conns


def _connection_id(key: tuple, source: str) -> str:
    prefix = f"{source}:" if source else ""
    if key[0] == "stream":
        return f"{prefix}s{key[1]}"
    (a_ip, a_port), (b_ip, b_port) = key[1]
    return f"{prefix}{a_ip}:{a_port}-{b_ip}:{b_port}#{key[2]}"


def _build_connection(key, recs, local_ip, session_gap, capture_end, source) -> Connection:
    recs = sorted(recs, key=lambda r: r.ts)
    messages = [
        Message(
            ts=r.ts,
            command=r.command,
            kind=r.kind,
            sender=Sender.LOCAL if r.src_ip == local_ip else Sender.REMOTE,
            fields=r.fields,
            segment_lengths=r.segment_lengths,
            decode_error=r.decode_error,
        )
        for r in recs
    ]
    first = recs[0]
    if first.src_ip == local_ip:
        remote_ip, remote_port, local_port = first.dst_ip, first.dst_port, first.src_port
    else:
        remote_ip, remote_port, local_port = first.src_ip, first.src_port, first.dst_port

    hs_request = next((m for m in messages if m.is_(Command.HANDSHAKE, MessageKind.REQUEST)), None)
    initiator = hs_request.sender if hs_request is not None else messages[0].sender
    direction = Direction.INCOMING if initiator is Sender.REMOTE else Direction.OUTGOING

    completed = hs_request is not None and any(
        m.is_(Command.HANDSHAKE, MessageKind.RESPONSE) and m.sender is not hs_request.sender
        for m in messages
    )
    end_ts = recs[-1].ts
    starts_with_handshake = messages[0].is_(Command.HANDSHAKE, MessageKind.REQUEST)
    return Connection(
        id=_connection_id(key, source),
        local_ip=local_ip,
        remote_ip=remote_ip,
        remote_port=remote_port,
        local_port=local_port,
        direction=direction,
        start_ts=recs[0].ts,
        end_ts=end_ts,
        messages=messages,
        handshake_completed=completed,
        complete=starts_with_handshake and end_ts + session_gap <= capture_end,
        source=source,
    )


def filter_incomplete(conns: Iterable[Connection]) -> tuple[list[Connection], int]:
    """Drop connections whose start was missed or whose records failed to decode."""
    kept: list[Connection] = []
    dropped = 0
    for c in conns:
        first_base = next((m for m in c.messages if m.command in BASE_COMMANDS), None)
        if (
            first_base is None
            or not first_base.is_(Command.HANDSHAKE, MessageKind.REQUEST)
            or c.decode_errors
        ):
            dropped += 1
            continue
        kept.append(c)
    if dropped:
        logger.info(f"filtered out {dropped} connections with incomplete data")
    return kept, dropped


def _request_times(conn: Connection, sender: Sender) -> list[float]:
    return [m.ts for m in conn.messages if m.is_(Command.TIMED_SYNC, MessageKind.REQUEST, sender)]


def _intervals(times: list[float]) -> list[float]:
    return [float(d) for d in np.diff(times) if d > 0] if len(times) > 1 else []


def timed_sync_stats(conn: Connection) -> TimedSyncStats:
    """
    Raises:
        InsufficientData: Fewer than two remote Timed Sync requests
    """
    remote = _request_times(conn, Sender.REMOTE)
    if len(remote) < 2:
        raise InsufficientData(f"{conn.id}: {len(remote)} remote Timed Sync requests")
    remote_intervals = _intervals(remote)
    if not remote_intervals:
        raise InsufficientData(f"{conn.id}: remote Timed Sync requests share one timestamp")
    return TimedSyncStats(
        request_intervals_local=_intervals(_request_times(conn, Sender.LOCAL)),
        request_intervals_remote=remote_intervals,
        mean_remote_interval=float(np.mean(remote_intervals)),
        count_remote_requests=len(remote),
    )


def command_sequence(conn: Connection) -> list[tuple[int, MessageKind, Sender]]:
    return [(m.command, m.kind, m.sender) for m in conn.messages]


def timed_sync_baseline(conns: Iterable[Connection], min_duration: float = 0.0) -> dict:
    """Distribution of per-connection mean remote Timed Sync intervals."""
    means = []
    for c in conns:
        if c.duration < min_duration:
            continue
        try:
            means.append(timed_sync_stats(c).mean_remote_interval)
        except InsufficientData:
            continue
    if not means:
        return {"connections": 0, "median": None, "quantiles": None}
    q = np.quantile(means, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "connections": len(means),
        "median": float(np.median(means)),
        "quantiles": {k: round(float(v), 6) for k, v in zip(("p05", "p25", "p50", "p75", "p95"), q)},
    }
