import random

import pytest

from peer_sentinel.formats import epee, levin
from peer_sentinel.formats.levin import Command, LevinFrame, MessageKind, ParsedMessage
from peer_sentinel.utils.config import LEVIN_PACKET_REQUEST, LEVIN_PACKET_RESPONSE
from peer_sentinel.utils.exceptions import (
    CodecError,
    Incomplete,
    InvalidFlags,
    MalformedSignature,
    OversizedPayload,
    UnknownCommand,
    UnsupportedValue,
)


def _ping_request() -> bytes:
    return levin.encode_frame(LevinFrame.for_message(Command.PING, MessageKind.REQUEST))


def test_empty_ping_frame():
    data = _ping_request()
    assert len(data) == 33
    assert data[:8] == bytes([0x01, 0x21, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01])
    assert data[8:16] == b"\x00" * 8

    frame, consumed = levin.decode_frame(data)
    assert consumed == 33
    assert frame.command == Command.PING
    assert frame.payload_size == 0
    assert frame.kind is MessageKind.REQUEST
    assert frame.expect_response


def test_ten_octet_payload_frame():
    frame = LevinFrame(command=Command.NEW_BLOCK, payload=bytes(range(10)))
    assert len(levin.encode_frame(frame)) == 43


def test_flipped_signature():
    data = bytearray(_ping_request())
    data[0] ^= 0x01
    with pytest.raises(MalformedSignature):
        levin.decode_frame(bytes(data))


def test_incomplete_header():
    with pytest.raises(Incomplete) as excinfo:
        levin.decode_frame(_ping_request()[:20])
    assert excinfo.value.needed == 13


def test_incomplete_payload():
    data = levin.encode_frame(LevinFrame(command=Command.NEW_BLOCK, payload=b"x" * 10))
    with pytest.raises(Incomplete) as excinfo:
        levin.decode_frame(data[:38])
    assert excinfo.value.needed == 5


def test_oversized_payload():
    data = levin.encode_frame(LevinFrame(command=Command.NEW_BLOCK, payload=b"x" * 64))
    with pytest.raises(OversizedPayload):
        levin.decode_frame(data, max_payload=32)


def test_base_command_needs_one_direction_bit():
    with pytest.raises(InvalidFlags):
        LevinFrame(command=Command.PING, flags=LEVIN_PACKET_REQUEST | LEVIN_PACKET_RESPONSE)
    with pytest.raises(InvalidFlags):
        LevinFrame(command=Command.HANDSHAKE, flags=0)
    # notifications carry no such constraint
    LevinFrame(command=Command.NEW_TRANSACTIONS, flags=0)


def test_random_frames_round_trip():
    rng = random.Random(3)
    commands = list(Command)
    for _ in range(10_000):
        command = rng.choice(commands)
        frame = LevinFrame(
            command=int(command),
            payload=rng.randbytes(rng.randrange(64)),
            flags=rng.choice([LEVIN_PACKET_REQUEST, LEVIN_PACKET_RESPONSE]),
            expect_response=rng.random() < 0.5,
            return_code=rng.randint(-2 ** 31, 2 ** 31 - 1),
            protocol_version=rng.randrange(2 ** 32),
        )
        decoded, consumed = levin.decode_frame(levin.encode_frame(frame))
        assert decoded == frame
        assert consumed == frame.wire_size


def _mutated_streams_only_raise_codec_errors(seed: int, rounds: int) -> None:
    rng = random.Random(seed)
    base = _ping_request() + levin.encode_frame(LevinFrame(command=Command.NEW_BLOCK, payload=b"abc"))
    for _ in range(rounds):
        data = bytearray(base)
        for _ in range(rng.randrange(1, 4)):
            data[rng.randrange(len(data))] = rng.getrandbits(8)
        try:
            list(levin.iter_frames(bytes(data[:rng.randrange(1, len(data) + 1)])))
        except CodecError:
            pass


def test_random_bytes_only_raise_codec_errors():
    _mutated_streams_only_raise_codec_errors(5, 2_000)


@pytest.mark.slow
def test_random_bytes_only_raise_codec_errors_at_scale():
    _mutated_streams_only_raise_codec_errors(6, 1_000_000)


def test_iter_frames_concatenated():
    data = _ping_request() + _ping_request()
    offsets = [offset for offset, _ in levin.iter_frames(data)]
    assert offsets == [0, 33]


def _wire(msg: ParsedMessage) -> bytes:
    return levin.encode_frame(LevinFrame.for_message(msg.command, msg.kind, levin.encode_payload(msg)))


class TestPayloads:
    def _handshake(self, entries: int = 0) -> ParsedMessage:
        root = {
            "node_data": epee.section({
                "network_id": epee.string(b"\x12" * 16),
                "peer_id": epee.u64(0xABCDEF),
                "my_port": epee.u32(18080),
                "support_flags": epee.u32(1),
            }),
            "payload_data": epee.section({"current_height": epee.u64(3_000_000)}),
        }
        if entries:
            root["local_peerlist_new"] = epee.section_array([
                {"adr": epee.section({"type": epee.u8(1)}), "id": epee.u64(i + 1)} for i in range(entries)
            ])
        kind = MessageKind.RESPONSE if entries else MessageKind.REQUEST
        return ParsedMessage(int(Command.HANDSHAKE), kind, epee.flatten(root))

    def test_handshake_request_paths(self):
        msg = self._handshake()
        frame, _ = levin.decode_frame(_wire(msg))
        parsed = levin.decode_payload(frame)
        assert "node_data.support_flags" in parsed.fields
        assert parsed.kind is MessageKind.REQUEST
        assert parsed == msg

    def test_handshake_response_with_full_list(self):
        msg = self._handshake(entries=250)
        frame, _ = levin.decode_frame(_wire(msg))
        parsed = levin.decode_payload(frame)
        assert len(parsed.fields["local_peerlist_new"].value) == 250
        assert frame.return_code == 1
        assert not frame.expect_response

    def test_empty_ping_payload(self):
        frame, _ = levin.decode_frame(_ping_request())
        assert levin.decode_payload(frame).fields == {}

    def test_unknown_command(self):
        frame = LevinFrame(command=4242, payload=epee.STORAGE_HEADER)
        with pytest.raises(UnknownCommand):
            levin.decode_payload(frame)

    def test_unsupported_value(self):
        msg = ParsedMessage(int(Command.PING), MessageKind.RESPONSE, {"status": epee.EpeeValue(epee.EpeeType.STRING, 5)})
        with pytest.raises(UnsupportedValue):
            levin.encode_payload(msg)

    def test_plain_view(self):
        plain = self._handshake().plain()
        assert plain["node_data.peer_id"] == 0xABCDEF
        assert plain["node_data.network_id"] == "0x" + "12" * 16
