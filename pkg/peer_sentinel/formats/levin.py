"""
Levin framing.

Every P2P message is a fixed 33-octet little-endian header followed by an
epee storage payload:

    signature u64 | payload_size u64 | expect_response u8 | command u32 |
    return_code i32 | flags u32 | protocol_version u32
"""
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Iterator

from . import epee
from ..utils.config import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_PAYLOAD,
    LEVIN_HEADER_SIZE,
    LEVIN_PACKET_REQUEST,
    LEVIN_PACKET_RESPONSE,
    LEVIN_PROTOCOL_VER_1,
    LEVIN_SIGNATURE,
)
from ..utils.exceptions import (
    CodecError,
    Incomplete,
    InvalidFlags,
    MalformedSignature,
    OversizedPayload,
    UnknownCommand,
)

HEADER_STRUCT = struct.Struct("<QQBIiII")
SIGNATURE_BYTES = struct.pack("<Q", LEVIN_SIGNATURE)

assert HEADER_STRUCT.size == LEVIN_HEADER_SIZE


class Command(IntEnum):
    """Command codes carried in the Levin header."""
    HANDSHAKE = 1001
    TIMED_SYNC = 1002
    PING = 1003
    SUPPORT_FLAGS = 1007
    # cryptonote notifications: decoded to field paths, never interpreted
    NEW_BLOCK = 2001
    NEW_TRANSACTIONS = 2002
    REQUEST_GET_OBJECTS = 2003
    RESPONSE_GET_OBJECTS = 2004
    REQUEST_CHAIN = 2006
    RESPONSE_CHAIN_ENTRY = 2007
    NEW_FLUFFY_BLOCK = 2008
    REQUEST_FLUFFY_MISSING_TX = 2009
    GET_TXPOOL_COMPLEMENT = 2010

    @property
    def is_base(self) -> bool:
        return self in BASE_COMMANDS

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_code(cls, code: int) -> "Command":
        """Raises UnknownCommand for codes outside the known set."""
        try:
            return cls(code)
        except ValueError:
            raise UnknownCommand(code) from None


BASE_COMMANDS = frozenset({Command.HANDSHAKE, Command.TIMED_SYNC, Command.PING, Command.SUPPORT_FLAGS})


class MessageKind(str, Enum):
    REQUEST = "request"
    RESPONSE = "response"

    @classmethod
    def from_string(cls, value: str) -> "MessageKind":
        return cls(value.lower())


@dataclass(frozen=True)
class LevinFrame:
    """One decoded Levin frame. Construction enforces the header invariants."""
    command: int
    payload: bytes = b""
    flags: int = LEVIN_PACKET_REQUEST
    expect_response: bool = False
    return_code: int = 0
    protocol_version: int = LEVIN_PROTOCOL_VER_1
    signature: int = LEVIN_SIGNATURE
    payload_size: int = field(default=-1)

    def __post_init__(self):
        if self.signature != LEVIN_SIGNATURE:
            raise MalformedSignature(f"bad Levin signature 0x{self.signature:016x}")
        if self.payload_size == -1:
            object.__setattr__(self, "payload_size", len(self.payload))
        if self.payload_size != len(self.payload):
            raise CodecError(f"payload_size {self.payload_size} does not match {len(self.payload)} payload octets")
        if self.command in BASE_COMMANDS:
            bits = self.flags & (LEVIN_PACKET_REQUEST | LEVIN_PACKET_RESPONSE)
            if bits not in (LEVIN_PACKET_REQUEST, LEVIN_PACKET_RESPONSE):
                raise InvalidFlags(f"command {self.command} with flags 0x{self.flags:x}")

    @property
    def kind(self) -> MessageKind:
        return MessageKind.RESPONSE if self.flags & LEVIN_PACKET_RESPONSE else MessageKind.REQUEST

    @property
    def wire_size(self) -> int:
        return LEVIN_HEADER_SIZE + self.payload_size

    @classmethod
    def for_message(cls, command: int, kind: MessageKind, payload: bytes = b"") -> "LevinFrame":
        """Frame a payload the way the reference client does: requests to base commands expect a response."""
        is_request = kind is MessageKind.REQUEST
        return cls(
            command=int(command),
            payload=payload,
            flags=LEVIN_PACKET_REQUEST if is_request else LEVIN_PACKET_RESPONSE,
            expect_response=is_request and command in BASE_COMMANDS,
            return_code=0 if is_request else 1,
        )


@dataclass
class ParsedMessage:
    """A decoded payload: command, direction of the exchange and flattened fields."""
    command: int
    kind: MessageKind
    fields: dict[str, epee.EpeeValue] = field(default_factory=dict)

    def plain(self) -> dict[str, Any]:
        return epee.plain_fields(self.fields)


# ============================================================================
# Frames
# ============================================================================
def decode_frame(data: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[LevinFrame, int]:
    """
    Decode the first frame in `data`.

    Returns:
        The frame and the number of octets it consumed

    Raises:
        MalformedSignature: The leading octets are not the Levin magic
        Incomplete: More octets are needed; `needed` says how many
        OversizedPayload: payload_size exceeds max_payload
        InvalidFlags: A base command without exactly one request/response bit
    """
    if not data:
        raise Incomplete(LEVIN_HEADER_SIZE)
    probe = bytes(data[:len(SIGNATURE_BYTES)])
    if probe != SIGNATURE_BYTES[:len(probe)]:
        raise MalformedSignature(f"bad Levin signature {probe.hex()}")
    if len(data) < LEVIN_HEADER_SIZE:
        raise Incomplete(LEVIN_HEADER_SIZE - len(data))

    signature, size, expect, command, rc, flags, version = HEADER_STRUCT.unpack_from(data, 0)
    if size > max_payload:
        raise OversizedPayload(size, max_payload)
    end = LEVIN_HEADER_SIZE + size
    if len(data) < end:
        raise Incomplete(end - len(data))

    frame = LevinFrame(
        command=command,
        payload=bytes(data[LEVIN_HEADER_SIZE:end]),
        flags=flags,
        expect_response=bool(expect),
        return_code=rc,
        protocol_version=version,
        signature=signature,
        payload_size=size,
    )
    return frame, end


def encode_frame(frame: LevinFrame) -> bytes:
    header = HEADER_STRUCT.pack(
        frame.signature,
        frame.payload_size,
        1 if frame.expect_response else 0,
        frame.command,
        frame.return_code,
        frame.flags,
        frame.protocol_version,
    )
    return header + frame.payload


def iter_frames(data: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Iterator[tuple[int, LevinFrame]]:
    """
    Yield (offset, frame) for every frame in a concatenated stream.

    Stops by raising the codec error of the first undecodable frame; callers
    that want to keep the frames decoded so far consume the iterator lazily.
    """
    offset = 0
    view = memoryview(data)
    while offset < len(data):
        frame, consumed = decode_frame(view[offset:], max_payload)
        yield offset, frame
        offset += consumed


# ============================================================================
# Payloads
# ============================================================================
def decode_payload(frame: LevinFrame, max_depth: int = DEFAULT_MAX_DEPTH) -> ParsedMessage:
    """
    Decode a frame's storage payload into flattened field paths.

    Raises:
        UnknownCommand: Command code outside the known set
        MalformedStorage: Bad storage signature or truncated entry
        DepthExceeded: Nesting beyond max_depth
    """
    command = Command.from_code(frame.command)
    fields = epee.flatten(epee.decode_storage(frame.payload, max_depth))
    return ParsedMessage(command=int(command), kind=frame.kind, fields=fields)


def encode_payload(msg: ParsedMessage) -> bytes:
    """
    Raises:
        UnsupportedValue: A field cannot be represented in epee storage
    """
    return epee.encode_storage(epee.unflatten(msg.fields))
