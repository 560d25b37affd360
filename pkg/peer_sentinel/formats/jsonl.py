"""
Canonical JSONL capture records: one PacketRecord object per line.
"""
import ipaddress
import json
import math
from numbers import Real
from pathlib import Path
from typing import Any, Iterable, Optional

from ..core.types import MessageKind, PacketRecord

REQUIRED_KEYS = ("ts", "src_ip", "src_port", "dst_ip", "dst_port", "command", "kind")


def _port(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 0xFFFF:
        raise ValueError(f"{name} is not a port: {value!r}")
    return value


def _address(value: Any, name: str) -> str:
    # connection endpoints are IP literals; onion hosts only appear inside peer lists
    try:
        ipaddress.ip_address(value)
    except (ValueError, TypeError):
        raise ValueError(f"{name} is not an IP address: {value!r}") from None
    return value


def parse_record(obj: Any) -> PacketRecord:
    """
    Convert one decoded JSON object into a PacketRecord.

    :param obj Any: A decoded JSON value
    :rtype PacketRecord: The record
    :raises ValueError: On missing keys or wrongly typed values
    """
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")

    ts = obj["ts"]
    if isinstance(ts, bool) or not isinstance(ts, Real) or not math.isfinite(ts):
        raise ValueError(f"ts is not a finite number: {ts!r}")
    for key in ("src_ip", "dst_ip"):
        _address(obj[key], key)
    command = obj["command"]
    if isinstance(command, bool) or not isinstance(command, int) or command < 0:
        raise ValueError(f"command is not a code: {command!r}")

    fields = obj.get("fields") or {}
    if not isinstance(fields, dict):
        raise ValueError("fields is not an object")

    stream_id: Optional[int] = obj.get("stream_id")
    if stream_id is not None and (isinstance(stream_id, bool) or not isinstance(stream_id, int)):
        raise ValueError(f"stream_id is not an integer: {stream_id!r}")

    segments = obj.get("segment_lengths")
    if segments is not None:
        if not isinstance(segments, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s > 0 for s in segments
        ):
            raise ValueError("segment_lengths must be a list of positive integers")
        segments = segments or None

    error = obj.get("decode_error")
    return PacketRecord(
        ts=float(ts),
        src_ip=obj["src_ip"],
        src_port=_port(obj["src_port"], "src_port"),
        dst_ip=obj["dst_ip"],
        dst_port=_port(obj["dst_port"], "dst_port"),
        command=command,
        kind=MessageKind.from_string(str(obj["kind"])),
        fields=fields,
        stream_id=stream_id,
        segment_lengths=segments,
        decode_error=str(error) if error else None,
    )


def render_record(record: PacketRecord) -> str:
    """Serialize a record as one compact, key-sorted JSON line (no newline)."""
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"))


def write_jsonl(path: str | Path, records: Iterable[PacketRecord]) -> int:
    """
    Write records to a JSONL file.

    :rtype int: Number of lines written
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(render_record(record))
            f.write("\n")
            count += 1
    return count
