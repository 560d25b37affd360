"""
epee portable storage: the key/value serialization carried in Levin payloads.

A storage blob is a 9-octet header (two signatures and a format version)
followed by a root section. A section is a varint entry count and, per entry,
a length-prefixed name, a type octet and the value. Arrays set the 0x80 bit
of the type octet and carry a varint element count.
"""
import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Iterator

from ..utils.config import (
    DEFAULT_MAX_DEPTH,
    PORTABLE_STORAGE_FORMAT_VER,
    PORTABLE_STORAGE_SIGNATUREA,
    PORTABLE_STORAGE_SIGNATUREB,
)
from ..utils.exceptions import DepthExceeded, MalformedStorage, UnsupportedValue

STORAGE_HEADER = struct.pack(
    "<IIB", PORTABLE_STORAGE_SIGNATUREA, PORTABLE_STORAGE_SIGNATUREB, PORTABLE_STORAGE_FORMAT_VER
)
ARRAY_FLAG = 0x80
PATH_SEPARATOR = "."
ENTRY_MARKER = "[]"


class EpeeType(IntEnum):
    """Serialized type tags."""
    INT64 = 1
    INT32 = 2
    INT16 = 3
    INT8 = 4
    UINT64 = 5
    UINT32 = 6
    UINT16 = 7
    UINT8 = 8
    DOUBLE = 9
    STRING = 10
    BOOL = 11
    OBJECT = 12
    ARRAY = 13


# struct format per fixed-width scalar
_SCALAR_FORMATS = {
    EpeeType.INT64: "<q",
    EpeeType.INT32: "<i",
    EpeeType.INT16: "<h",
    EpeeType.INT8: "<b",
    EpeeType.UINT64: "<Q",
    EpeeType.UINT32: "<I",
    EpeeType.UINT16: "<H",
    EpeeType.UINT8: "<B",
    EpeeType.DOUBLE: "<d",
}
_INTEGER_TYPES = {t for t in _SCALAR_FORMATS if t is not EpeeType.DOUBLE}


@dataclass(frozen=True)
class EpeeValue:
    """
    One tagged storage value.

    Scalars hold int/float/bool/bytes; OBJECT holds a dict of name to
    EpeeValue. When `array` is set, `value` is a tuple of EpeeValue that all
    carry `tag` (for ARRAY, each element is itself an array value with its
    own element tag).
    """
    tag: EpeeType
    value: Any
    array: bool = False

    def __post_init__(self):
        if self.array:
            if not isinstance(self.value, tuple):
                raise UnsupportedValue("array values must be tuples")
            for item in self.value:
                if not isinstance(item, EpeeValue):
                    raise UnsupportedValue("array elements must be EpeeValue")
                if self.tag is EpeeType.ARRAY:
                    if not item.array:
                        raise UnsupportedValue("array of arrays holds a scalar")
                elif item.tag is not self.tag or item.array:
                    raise UnsupportedValue(f"array of {self.tag.name} holds a mismatched element")


Section = dict[str, EpeeValue]


# ============================================================================
# Constructors
# ============================================================================
def u64(v: int) -> EpeeValue:
    return EpeeValue(EpeeType.UINT64, v)


def u32(v: int) -> EpeeValue:
    return EpeeValue(EpeeType.UINT32, v)


def u16(v: int) -> EpeeValue:
    return EpeeValue(EpeeType.UINT16, v)


def u8(v: int) -> EpeeValue:
    return EpeeValue(EpeeType.UINT8, v)


def i64(v: int) -> EpeeValue:
    return EpeeValue(EpeeType.INT64, v)


def string(v: bytes | str) -> EpeeValue:
    return EpeeValue(EpeeType.STRING, v.encode("utf-8") if isinstance(v, str) else bytes(v))


def section(entries: Section) -> EpeeValue:
    return EpeeValue(EpeeType.OBJECT, dict(entries))


def section_array(entries: list[Section]) -> EpeeValue:
    return EpeeValue(EpeeType.OBJECT, tuple(section(e) for e in entries), array=True)


# ============================================================================
# Varints
# ============================================================================
def write_varint(n: int) -> bytes:
    """The low two bits of the first octet select a 1, 2, 4 or 8 octet width."""
    if n < 0:
        raise UnsupportedValue(f"varint cannot encode negative value {n}")
    if n <= 0x3F:
        return struct.pack("<B", n << 2)
    if n <= 0x3FFF:
        return struct.pack("<H", (n << 2) | 1)
    if n <= 0x3FFFFFFF:
        return struct.pack("<I", (n << 2) | 2)
    if n <= 0x3FFFFFFFFFFFFFFF:
        return struct.pack("<Q", (n << 2) | 3)
    raise UnsupportedValue(f"varint value {n} too large")


class _Reader:
    """Bounds-checked cursor over a storage blob."""

    def __init__(self, data: bytes, max_depth: int):
        self.view = memoryview(data)
        self.pos = 0
        self.max_depth = max_depth

    @property
    def remaining(self) -> int:
        return len(self.view) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.remaining:
            raise MalformedStorage(f"truncated entry at offset {self.pos}: need {n}, have {self.remaining}")
        chunk = self.view[self.pos:self.pos + n].tobytes()
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Any:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def varint(self) -> int:
        if self.remaining < 1:
            raise MalformedStorage(f"truncated varint at offset {self.pos}")
        width = 1 << (self.view[self.pos] & 0x03)
        raw = int.from_bytes(self.take(width), "little")
        return raw >> 2

    def count(self, min_item_size: int) -> int:
        """Read an element count that the remaining octets could actually hold."""
        n = self.varint()
        if n * min_item_size > self.remaining:
            raise MalformedStorage(f"count {n} at offset {self.pos} exceeds remaining octets")
        return n


# ============================================================================
# Decoding
# ============================================================================
def _read_scalar(r: _Reader, tag: EpeeType) -> EpeeValue:
    if tag in _SCALAR_FORMATS:
        return EpeeValue(tag, r.unpack(_SCALAR_FORMATS[tag]))
    if tag is EpeeType.STRING:
        size = r.varint()
        return EpeeValue(tag, r.take(size))
    if tag is EpeeType.BOOL:
        return EpeeValue(tag, r.take(1)[0] != 0)
    raise MalformedStorage(f"type {tag.name} is not a scalar")


def _read_array(r: _Reader, tag: EpeeType, depth: int) -> EpeeValue:
    if depth > r.max_depth:
        raise DepthExceeded(f"array nesting deeper than {r.max_depth}")
    n = r.count(1)
    items: list[EpeeValue] = []
    for _ in range(n):
        if tag is EpeeType.OBJECT:
            items.append(EpeeValue(tag, _read_section(r, depth + 1)))
        elif tag is EpeeType.ARRAY:
            inner = _tag(r.take(1)[0])
            if not inner[1]:
                raise MalformedStorage("array-of-arrays element lacks the array flag")
            items.append(_read_array(r, inner[0], depth + 1))
        else:
            items.append(_read_scalar(r, tag))
    return EpeeValue(tag, tuple(items), array=True)


def _tag(octet: int) -> tuple[EpeeType, bool]:
    try:
        return EpeeType(octet & ~ARRAY_FLAG), bool(octet & ARRAY_FLAG)
    except ValueError:
        raise MalformedStorage(f"unknown type octet 0x{octet:02x}") from None


def _read_value(r: _Reader, depth: int) -> EpeeValue:
    tag, is_array = _tag(r.take(1)[0])
    if is_array:
        return _read_array(r, tag, depth)
    if tag is EpeeType.OBJECT:
        return EpeeValue(tag, _read_section(r, depth + 1))
    if tag is EpeeType.ARRAY:
        # a bare ARRAY tag is followed by the element type octet with the flag set
        inner, flagged = _tag(r.take(1)[0])
        if not flagged:
            raise MalformedStorage("ARRAY entry lacks a flagged element type")
        return _read_array(r, inner, depth)
    return _read_scalar(r, tag)


def _read_section(r: _Reader, depth: int) -> Section:
    if depth > r.max_depth:
        raise DepthExceeded(f"section nesting deeper than {r.max_depth}")
    n = r.count(3)
    out: Section = {}
    for _ in range(n):
        name_len = r.take(1)[0]
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedStorage(f"entry name at offset {r.pos} is not UTF-8") from None
        if PATH_SEPARATOR in name or ENTRY_MARKER in name:
            raise MalformedStorage(f"entry name {name!r} collides with the field-path syntax")
        if name in out:
            raise MalformedStorage(f"duplicate entry name {name!r}")
        out[name] = _read_value(r, depth)
    return out


def decode_storage(data: bytes, max_depth: int = DEFAULT_MAX_DEPTH) -> Section:
    """
    Decode a storage blob into its root section.

    An empty blob, or a bare header, decodes to an empty section.

    Raises:
        MalformedStorage: Bad signature, truncation or trailing octets
        DepthExceeded: Nesting beyond max_depth
    """
    if not data:
        return {}
    r = _Reader(data, max_depth)
    if r.take(min(len(data), len(STORAGE_HEADER))) != STORAGE_HEADER:
        raise MalformedStorage("bad storage signature")
    if r.remaining == 0:
        return {}
    root = _read_section(r, 0)
    if r.remaining:
        raise MalformedStorage(f"{r.remaining} trailing octets after root section")
    return root


# ============================================================================
# Encoding
# ============================================================================
def _write_scalar(v: EpeeValue) -> bytes:
    tag = v.tag
    try:
        if tag in _INTEGER_TYPES:
            if isinstance(v.value, bool) or not isinstance(v.value, int):
                raise UnsupportedValue(f"{tag.name} needs an int, got {v.value!r}")
            return struct.pack(_SCALAR_FORMATS[tag], v.value)
        if tag is EpeeType.DOUBLE:
            return struct.pack("<d", float(v.value))
    except struct.error as e:
        raise UnsupportedValue(f"{tag.name} cannot hold {v.value!r}: {e}") from e
    if tag is EpeeType.STRING:
        if not isinstance(v.value, (bytes, bytearray)):
            raise UnsupportedValue(f"STRING needs bytes, got {type(v.value).__name__}")
        return write_varint(len(v.value)) + bytes(v.value)
    if tag is EpeeType.BOOL:
        return b"\x01" if v.value else b"\x00"
    raise UnsupportedValue(f"type {tag.name} is not a scalar")


def _write_array_body(v: EpeeValue, depth: int) -> bytes:
    parts = [write_varint(len(v.value))]
    for item in v.value:
        if v.tag is EpeeType.OBJECT:
            parts.append(_write_section(item.value, depth + 1))
        elif v.tag is EpeeType.ARRAY:
            parts.append(bytes([item.tag | ARRAY_FLAG]))
            parts.append(_write_array_body(item, depth + 1))
        else:
            parts.append(_write_scalar(item))
    return b"".join(parts)


def _write_value(v: EpeeValue, depth: int) -> bytes:
    if not isinstance(v, EpeeValue):
        raise UnsupportedValue(f"expected EpeeValue, got {type(v).__name__}")
    if v.array:
        return bytes([v.tag | ARRAY_FLAG]) + _write_array_body(v, depth)
    if v.tag is EpeeType.OBJECT:
        if not isinstance(v.value, dict):
            raise UnsupportedValue("OBJECT needs a dict")
        return bytes([v.tag]) + _write_section(v.value, depth + 1)
    if v.tag is EpeeType.ARRAY:
        raise UnsupportedValue("ARRAY tag is only valid on array values")
    return bytes([v.tag]) + _write_scalar(v)


def _write_section(entries: Section, depth: int) -> bytes:
    if depth > DEFAULT_MAX_DEPTH:
        raise UnsupportedValue(f"section nesting deeper than {DEFAULT_MAX_DEPTH}")
    parts = [write_varint(len(entries))]
    for name, value in entries.items():
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise UnsupportedValue(f"entry name {name!r} longer than 255 octets")
        if PATH_SEPARATOR in name or ENTRY_MARKER in name or not raw:
            raise UnsupportedValue(f"entry name {name!r} cannot be used as a path segment")
        parts.append(bytes([len(raw)]) + raw)
        parts.append(_write_value(value, depth))
    return b"".join(parts)


def encode_storage(root: Section) -> bytes:
    """Encode a root section, header included. An empty root is the bare header."""
    if not root:
        return STORAGE_HEADER
    return STORAGE_HEADER + _write_section(root, 0)


# ============================================================================
# Field paths
# ============================================================================
def flatten(root: Section, prefix: str = "") -> dict[str, EpeeValue]:
    """
    Flatten nested sections into dot-separated paths.

    Arrays (including arrays of sections) stay whole under their path. An
    empty nested section is kept as an empty OBJECT so the shape survives.
    """
    out: dict[str, EpeeValue] = {}
    for name, value in root.items():
        path = f"{prefix}{name}"
        if value.tag is EpeeType.OBJECT and not value.array and value.value:
            out.update(flatten(value.value, path + PATH_SEPARATOR))
        else:
            out[path] = value
    return out


def unflatten(fields: dict[str, EpeeValue]) -> Section:
    """Inverse of flatten()."""
    root: Section = {}
    for path, value in fields.items():
        parts = path.split(PATH_SEPARATOR)
        node = root
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = EpeeValue(EpeeType.OBJECT, {})
                node[part] = child
            elif child.tag is not EpeeType.OBJECT or child.array:
                raise UnsupportedValue(f"path {path!r} crosses non-section value {part!r}")
            node = child.value
        if parts[-1] in node:
            raise UnsupportedValue(f"duplicate field path {path!r}")
        node[parts[-1]] = value
    return root


def _plain_scalar(v: EpeeValue) -> Any:
    if v.tag is EpeeType.STRING:
        raw = v.value
        if all(0x20 <= b < 0x7F for b in raw):
            return raw.decode("ascii")
        return "0x" + raw.hex()
    if v.tag is EpeeType.DOUBLE and not math.isfinite(v.value):
        return repr(v.value)
    return v.value


def to_plain(value: EpeeValue) -> Any:
    """
    JSON-friendly rendering of a value.

    Sections become dicts of flattened paths, arrays become lists, binary
    strings become `0x`-prefixed hex.
    """
    if value.array:
        return [to_plain(item) for item in value.value]
    if value.tag is EpeeType.OBJECT:
        return {path: to_plain(v) for path, v in flatten(value.value).items()}
    return _plain_scalar(value)


def plain_fields(fields: dict[str, EpeeValue]) -> dict[str, Any]:
    return {path: to_plain(v) for path, v in fields.items()}


def iter_paths(fields: dict[str, Any]) -> Iterator[str]:
    """
    Yield the field-path domain of a message.

    Works on typed (EpeeValue) and plain fields alike. Entries of arrays of
    sections contribute `<path>[].<entry path>`.
    """
    for path, value in fields.items():
        yield path
        for entry in section_entries(value):
            for sub in section_paths(entry):
                yield f"{path}{ENTRY_MARKER}{PATH_SEPARATOR}{sub}"


def section_entries(value: Any) -> list[Any]:
    if isinstance(value, EpeeValue):
        if value.array and value.tag is EpeeType.OBJECT:
            return [item.value for item in value.value]
        return []
    if isinstance(value, list):
        return [item for item in value if isinstance(item, dict)]
    return []


def section_paths(entry: Any, prefix: str = "") -> Iterator[str]:
    for name, value in entry.items():
        if isinstance(value, EpeeValue):
            if value.tag is EpeeType.OBJECT and not value.array and value.value:
                yield from section_paths(value.value, f"{prefix}{name}{PATH_SEPARATOR}")
            else:
                yield f"{prefix}{name}"
        elif isinstance(value, dict) and value:
            yield from section_paths(value, f"{prefix}{name}{PATH_SEPARATOR}")
        else:
            yield f"{prefix}{name}"
