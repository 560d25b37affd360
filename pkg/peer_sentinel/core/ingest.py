"""
Capture ingestion.

Turns JSONL record files or raw per-direction payload streams into a
PacketRecord stream, and pulls exchanged peer lists out of that stream.
"""
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from ..formats import jsonl
from ..formats.epee import plain_fields
from ..formats.levin import Command, decode_frame, decode_payload
from ..utils.config import DEFAULT_MAX_DEPTH, DEFAULT_MAX_PAYLOAD, PEER_LIST_MAX
from ..utils.exceptions import (
    CodecError,
    InputNotFoundError,
    MalformedStorage,
    SchemaViolation,
    UnknownCommand,
)
from ..utils.helpers import is_ipv4, is_valid_unicast, setup_logger, uint32_to_ip, validate_file_exists
from .types import Carrier, MessageKind, PacketRecord, PeerList, PeerListEntry

logger = setup_logger(__name__)

PEER_LIST_PATH = "local_peerlist_new"
RAW_STREAM_SUFFIX = ".bin"
SIDECAR_SUFFIX = ".meta.json"

# skip ratio above which a file is treated as the wrong input
MAX_SKIP_RATIO = 0.01
MIN_LINES_FOR_RATIO = 100


@dataclass
class DecodeErrorReport:
    """A frame-level codec error that ended decoding of one stream."""
    src_ip: str
    dst_ip: str
    stream_id: Optional[int]
    offset: int
    error: str
    kind: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IngestStats:
    """Per-run accounting; records_in always equals emitted plus skipped."""
    records_in: int = 0
    records_emitted: int = 0
    records_skipped: int = 0
    order_violations: int = 0
    decode_errors: list[DecodeErrorReport] = field(default_factory=list)
    invalid_list_entries: int = 0
    truncated_lists: int = 0

    def merge(self, other: "IngestStats") -> None:
        self.records_in += other.records_in
        self.records_emitted += other.records_emitted
        self.records_skipped += other.records_skipped
        self.order_violations += other.order_violations
        self.decode_errors.extend(other.decode_errors)
        self.invalid_list_entries += other.invalid_list_entries
        self.truncated_lists += other.truncated_lists

    def to_dict(self) -> dict:
        return {
            "records_in": self.records_in,
            "records_emitted": self.records_emitted,
            "records_skipped": self.records_skipped,
            "order_violations": self.order_violations,
            "frame_decode_errors": len(self.decode_errors),
            "invalid_list_entries": self.invalid_list_entries,
            "truncated_lists": self.truncated_lists,
        }


# ============================================================================
# JSONL
# ============================================================================
def read_jsonl(path: str | Path, stats: IngestStats | None = None) -> Iterator[PacketRecord]:
    """
    Stream records from a JSONL capture in file order.

    Malformed lines are skipped and counted. Timestamps that go backwards
    within one stream_id are counted as order violations but still yielded.

    Raises:
        InputNotFoundError: The file does not exist
        SchemaViolation: More than 1% of lines malformed (files of 100+ lines),
            or no line at all could be read
    """
    p = validate_file_exists(path)
    return _read_jsonl(p, stats if stats is not None else IngestStats())


def _read_jsonl(path: Path, stats: IngestStats) -> Iterator[PacketRecord]:
    lines = skipped = 0
    last_ts: dict[Any, float] = {}
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            lines += 1
            stats.records_in += 1
            try:
                record = jsonl.parse_record(json.loads(raw.decode("utf-8")))
            except (ValueError, TypeError) as e:
                skipped += 1
                stats.records_skipped += 1
                logger.debug(f"{path.name}:{lineno}: skipped malformed record ({e})")
                continue

            key = record.stream_id if record.stream_id is not None else record.five_tuple
            if key in last_ts and record.ts < last_ts[key]:
                stats.order_violations += 1
            last_ts[key] = max(record.ts, last_ts.get(key, record.ts))

            stats.records_emitted += 1
            yield record

    if skipped:
        logger.warning(f"{path.name}: skipped {skipped} of {lines} malformed lines")
    if lines and skipped == lines:
        raise SchemaViolation(f"{path}: none of {lines} lines is a capture record")
    if lines >= MIN_LINES_FOR_RATIO and skipped > lines * MAX_SKIP_RATIO:
        raise SchemaViolation(
            f"{path}: {skipped} of {lines} lines malformed, this does not look like a capture file"
        )


# ============================================================================
# Raw Streams
# ============================================================================
@dataclass
class StreamMeta:
    """Endpoints and timing for one direction of one connection."""
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    stream_id: Optional[int] = None
    ts_base: float = 0.0
    # per-frame timestamps and segment sizes, when the capture tool kept them
    frame_ts: Optional[list[float]] = None
    segment_lengths: Optional[list[list[int]]] = None

    @classmethod
    def from_dict(cls, d: dict) -> "StreamMeta":
        try:
            return cls(
                src_ip=str(d["src_ip"]),
                src_port=int(d["src_port"]),
                dst_ip=str(d["dst_ip"]),
                dst_port=int(d["dst_port"]),
                stream_id=d.get("stream_id"),
                ts_base=float(d.get("ts_base", 0.0)),
                frame_ts=[float(t) for t in d["frame_ts"]] if d.get("frame_ts") is not None else None,
                segment_lengths=d.get("segment_lengths"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaViolation(f"invalid stream metadata: {e}") from e

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}


def decode_stream(
    payload: bytes,
    meta: StreamMeta,
    errors: list[DecodeErrorReport] | None = None,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Iterator[PacketRecord]:
    """
    Decode one direction of a connection into records, one per frame.

    A frame-level codec error (bad signature, truncation, oversize) ends the
    stream and is appended to `errors`. Payload errors keep the record with
    `decode_error` set; unknown commands keep it with empty fields.
    """
    offset = 0
    index = 0
    view = memoryview(payload)
    while offset < len(payload):
        try:
            frame, consumed = decode_frame(view[offset:], max_payload)
        except CodecError as e:
            logger.debug(f"stream {meta.stream_id}: frame error at offset {offset}: {e}")
            if errors is not None:
                errors.append(DecodeErrorReport(meta.src_ip, meta.dst_ip, meta.stream_id, offset, str(e), type(e).__name__))
            return

        fields: dict[str, Any] = {}
        decode_error = None
        try:
            fields = plain_fields(decode_payload(frame, max_depth).fields)
        except UnknownCommand as e:
            logger.debug(f"stream {meta.stream_id}: {e}")
        except MalformedStorage as e:
            decode_error = str(e)

        ts = meta.ts_base
        if meta.frame_ts is not None and index < len(meta.frame_ts):
            ts = meta.frame_ts[index]
        segments = None
        if meta.segment_lengths is not None and index < len(meta.segment_lengths):
            segments = list(meta.segment_lengths[index]) or None

        yield PacketRecord(
            ts=ts,
            src_ip=meta.src_ip,
            src_port=meta.src_port,
            dst_ip=meta.dst_ip,
            dst_port=meta.dst_port,
            command=frame.command,
            kind=frame.kind,
            fields=fields,
            stream_id=meta.stream_id,
            segment_lengths=segments,
            decode_error=decode_error,
        )
        offset += consumed
        index += 1


def sidecar_path(stream_path: Path) -> Path:
    return stream_path.with_name(stream_path.name + SIDECAR_SUFFIX)


def load_raw_stream(path: str | Path) -> tuple[bytes, StreamMeta]:
    """Read a payload file and its `<file>.meta.json` sidecar."""
    p = validate_file_exists(path)
    meta_path = sidecar_path(p)
    if not meta_path.is_file():
        raise InputNotFoundError(f"missing stream metadata: {meta_path}")
    try:
        meta = StreamMeta.from_dict(json.loads(meta_path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"{meta_path}: {e}") from e
    return p.read_bytes(), meta


def raw_stream_files(path: str | Path) -> list[Path]:
    """A single payload file, or every `*.bin` in a directory in name order."""
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob(f"*{RAW_STREAM_SUFFIX}"))
    validate_file_exists(p)
    return [p]


def read_raw_streams(
    path: str | Path,
    stats: IngestStats | None = None,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[PacketRecord]:
    stats = stats if stats is not None else IngestStats()
    records: list[PacketRecord] = []
    for stream_path in raw_stream_files(path):
        payload, meta = load_raw_stream(stream_path)
        decoded = list(decode_stream(payload, meta, stats.decode_errors, max_payload, max_depth))
        stats.records_in += len(decoded)
        stats.records_emitted += len(decoded)
        records.extend(decoded)
    return records


def read_capture(path: str | Path, fmt: str, stats: IngestStats | None = None,
                 max_payload: int = DEFAULT_MAX_PAYLOAD, max_depth: int = DEFAULT_MAX_DEPTH) -> list[PacketRecord]:
    """Read one input in either supported format, sorted into capture order."""
    if fmt == "jsonl":
        records = list(read_jsonl(path, stats))
    elif fmt == "raw-stream":
        records = read_raw_streams(path, stats, max_payload, max_depth)
    else:
        raise ValueError(f"unknown input format: {fmt}")
    records.sort(key=record_sort_key)
    return records


def record_sort_key(r: PacketRecord) -> tuple:
    return (r.ts, -1 if r.stream_id is None else r.stream_id, r.src_ip, r.src_port)


# ============================================================================
# Peer Lists
# ============================================================================
def _flatten_plain(entry: dict, prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in entry.items():
        if isinstance(value, dict):
            out.update(_flatten_plain(value, f"{prefix}{key}."))
        else:
            out[f"{prefix}{key}"] = value
    return out


def _as_int(value: Any) -> Optional[int]:
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 16) if value.startswith("0x") else int(value)
        except ValueError:
            return None
    return None


def parse_entry(raw: Any) -> PeerListEntry:
    """Build an entry from either the epee field layout or the short `ip`/`port` form."""
    if not isinstance(raw, dict):
        return PeerListEntry(ip="", port=0, valid=False)
    flat = _flatten_plain(raw)

    ip = ""
    if isinstance(flat.get("ip"), str):
        ip = flat["ip"]
    elif _as_int(flat.get("adr.addr.m_ip")) is not None:
        try:
            ip = uint32_to_ip(_as_int(flat["adr.addr.m_ip"]))
        except (OverflowError, ValueError):
            ip = ""
    else:
        # IPv6 and anonymity-network entries are kept as opaque text
        for key in ("adr.addr.addr", "adr.addr.host"):
            if isinstance(flat.get(key), str):
                ip = flat[key]
                break

    port = _as_int(flat.get("port", flat.get("adr.addr.m_port", flat.get("adr.addr.port")))) or 0
    if ip and (is_ipv4(ip) or ip.replace(".", "").isdigit()):
        valid = is_valid_unicast(ip)
    else:
        valid = bool(ip)

    peer_id = _as_int(flat.get("peer_id", flat.get("id")))
    return PeerListEntry(
        ip=ip,
        port=port,
        peer_id=peer_id or None,
        last_seen=_as_int(flat.get("last_seen")),
        pruning_seed=_as_int(flat.get("pruning_seed")),
        rpc_port=_as_int(flat.get("rpc_port")),
        rpc_credits_per_hash=_as_int(flat.get("rpc_credits_per_hash")),
        valid=valid,
    )


def carrier_of(record: PacketRecord) -> Carrier:
    if record.kind is MessageKind.RESPONSE:
        if record.command == Command.HANDSHAKE:
            return Carrier.HANDSHAKE_RESPONSE
        if record.command == Command.TIMED_SYNC:
            return Carrier.TIMED_SYNC_RESPONSE
    return Carrier.OTHER


def extract_peer_lists(records: Iterable[PacketRecord], stats: IngestStats | None = None) -> Iterator[PeerList]:
    """One PeerList per record carrying `local_peerlist_new`, sourced at the record's sender."""
    for record in records:
        if PEER_LIST_PATH not in record.fields:
            continue
        raw = record.fields[PEER_LIST_PATH]
        items = raw if isinstance(raw, list) else []
        entries = [parse_entry(item) for item in items]
        truncated = 0
        if len(entries) > PEER_LIST_MAX:
            truncated = len(entries) - PEER_LIST_MAX
            logger.warning(f"peer list from {record.src_ip} has {len(entries)} entries, keeping {PEER_LIST_MAX}")
            entries = entries[:PEER_LIST_MAX]
        plist = PeerList(
            source_ip=record.src_ip,
            ts=record.ts,
            carrier=carrier_of(record),
            entries=entries,
            stream_id=record.stream_id,
            truncated=truncated,
        )
        if stats is not None:
            stats.invalid_list_entries += plist.invalid_count
            stats.truncated_lists += 1 if truncated else 0
        yield plist
