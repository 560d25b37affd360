import json

import pytest

from peer_sentinel.core import ingest
from peer_sentinel.core.ingest import IngestStats, StreamMeta
from peer_sentinel.core.types import Carrier, Command, MessageKind
from peer_sentinel.formats import epee, levin
from peer_sentinel.formats.jsonl import parse_record, render_record
from peer_sentinel.formats.levin import LevinFrame
from peer_sentinel.utils.exceptions import InputNotFoundError, SchemaViolation
from peer_sentinel.utils.helpers import ip_to_uint32

from .factories import LOCAL, record


def _line(ts=1.0, **overrides) -> str:
    obj = {
        "ts": ts, "src_ip": "31.0.0.1", "src_port": 18080, "dst_ip": LOCAL, "dst_port": 40001,
        "command": 1003, "kind": "request", "stream_id": 1, "fields": {},
    }
    obj.update(overrides)
    return json.dumps(obj)


def _write(tmp_path, lines) -> str:
    path = tmp_path / "capture.jsonl"
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return str(path)


def _epee_entry(ip: str, **extra) -> dict:
    entry = {"adr.type": 1, "adr.addr.m_ip": ip_to_uint32(ip), "adr.addr.m_port": 18080, "id": 5}
    entry.update(extra)
    return entry


class TestReadJsonl:
    def test_reads_records_in_file_order(self, tmp_path):
        path = _write(tmp_path, [_line(1.0), _line(2.0, command=1002, kind="response")])
        records = list(ingest.read_jsonl(path))
        assert [r.ts for r in records] == [1.0, 2.0]
        assert records[1].kind is MessageKind.RESPONSE

    def test_empty_file(self, tmp_path):
        assert list(ingest.read_jsonl(_write(tmp_path, []))) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputNotFoundError):
            ingest.read_jsonl(tmp_path / "nope.jsonl")

    def test_malformed_lines_are_skipped_and_counted(self, tmp_path):
        path = _write(tmp_path, [_line(1.0), "{not json", _line(2.0, src_port="x"), _line(3.0)])
        stats = IngestStats()
        records = list(ingest.read_jsonl(path, stats))
        assert len(records) == 2
        assert stats.records_skipped == 2
        assert stats.records_in == stats.records_emitted + stats.records_skipped

    def test_invalid_utf8_line_is_skipped(self, tmp_path):
        path = tmp_path / "capture.jsonl"
        body = "".join(f"{_line(float(i))}\n" for i in range(200)).encode("utf-8")
        path.write_bytes(body + b'{"ts": "\xff\xfe"}\n' + _line(200.0).encode("utf-8") + b"\n")
        stats = IngestStats()
        records = list(ingest.read_jsonl(path, stats))
        assert len(records) == 201
        assert stats.records_skipped == 1

    @pytest.mark.parametrize("bad", ["NaN", "Infinity", "-Infinity"])
    def test_non_finite_timestamp_is_skipped(self, tmp_path, bad):
        lines = [_line(1.0), _line(2.0).replace('"ts": 2.0', f'"ts": {bad}'), _line(3.0)]
        stats = IngestStats()
        records = list(ingest.read_jsonl(_write(tmp_path, lines), stats))
        assert [r.ts for r in records] == [1.0, 3.0]
        assert stats.records_skipped == 1

    def test_mostly_malformed_file_is_rejected(self, tmp_path):
        lines = [_line(float(i)) for i in range(100)] + ["garbage"] * 2
        with pytest.raises(SchemaViolation):
            list(ingest.read_jsonl(_write(tmp_path, lines)))

    def test_one_percent_is_tolerated(self, tmp_path):
        lines = [_line(float(i)) for i in range(100)] + ["garbage"]
        assert len(list(ingest.read_jsonl(_write(tmp_path, lines)))) == 100

    def test_all_lines_malformed(self, tmp_path):
        with pytest.raises(SchemaViolation):
            list(ingest.read_jsonl(_write(tmp_path, ["a", "b"])))

    def test_out_of_order_counted_not_repaired(self, tmp_path):
        stats = IngestStats()
        records = list(ingest.read_jsonl(_write(tmp_path, [_line(5.0), _line(4.0)]), stats))
        assert [r.ts for r in records] == [5.0, 4.0]
        assert stats.order_violations == 1


def test_record_json_line_round_trip():
    r = record(1.5, "31.0.0.1", LOCAL, Command.PING, MessageKind.RESPONSE,
               {"status": "OK", "peer_id": 9}, stream_id=3)
    r.segment_lengths = [33, 12]
    assert parse_record(json.loads(render_record(r))) == r


@pytest.mark.parametrize("bad", [
    {"ts": "now"},
    {"ts": float("nan")},
    {"ts": float("inf")},
    {"src_ip": "abc.onion"},
    {"dst_ip": "31.0.0.256"},
    {"src_ip": ""},
    {"kind": "sideways"},
    {"dst_port": 70000},
    {"command": -1},
    {"segment_lengths": [0]},
])
def test_parse_record_rejects(bad):
    obj = json.loads(_line())
    obj.update(bad)
    with pytest.raises(ValueError):
        parse_record(obj)


def test_parse_record_accepts_ipv6_endpoints():
    obj = json.loads(_line(src_ip="2001:db8::1"))
    assert parse_record(obj).src_ip == "2001:db8::1"


class TestDecodeStream:
    meta = StreamMeta(src_ip="31.0.0.1", src_port=18080, dst_ip=LOCAL, dst_port=40001, stream_id=7, ts_base=10.0)

    def _frame(self, command=Command.PING, kind=MessageKind.REQUEST, root=None) -> bytes:
        payload = epee.encode_storage(root) if root else b""
        return levin.encode_frame(LevinFrame.for_message(command, kind, payload))

    def test_two_pings(self):
        records = list(ingest.decode_stream(self._frame() + self._frame(), self.meta))
        assert len(records) == 2
        assert all(r.command == Command.PING and r.stream_id == 7 for r in records)

    def test_trailing_garbage(self):
        errors = []
        records = list(ingest.decode_stream(self._frame() + b"\x00garbage", self.meta, errors))
        assert len(records) == 1
        assert len(errors) == 1
        assert errors[0].offset == 33
        assert errors[0].kind == "MalformedSignature"

    def test_empty_payload(self):
        assert list(ingest.decode_stream(b"", self.meta)) == []

    def test_frame_timestamps_and_segments(self):
        meta = StreamMeta(src_ip="31.0.0.1", src_port=1, dst_ip=LOCAL, dst_port=2,
                          frame_ts=[1.0, 2.0], segment_lengths=[[8, 25], [33]])
        records = list(ingest.decode_stream(self._frame() + self._frame(), meta))
        assert [r.ts for r in records] == [1.0, 2.0]
        assert records[0].segment_lengths == [8, 25]

    def test_bad_storage_keeps_record(self):
        bad = levin.encode_frame(LevinFrame.for_message(Command.PING, MessageKind.RESPONSE, b"\x00" * 12))
        (r,) = ingest.decode_stream(bad, self.meta)
        assert r.decode_error
        assert r.fields == {}

    def test_unknown_command_keeps_record(self):
        frame = levin.encode_frame(LevinFrame(command=4242, payload=epee.STORAGE_HEADER))
        (r,) = ingest.decode_stream(frame, self.meta)
        assert r.command == 4242
        assert r.fields == {} and r.decode_error is None

    def test_decoded_fields_are_plain(self):
        frame = self._frame(Command.PING, MessageKind.RESPONSE,
                            {"status": epee.string("OK"), "peer_id": epee.u64(12)})
        (r,) = ingest.decode_stream(frame, self.meta)
        assert r.fields == {"status": "OK", "peer_id": 12}


class TestRawStreams:
    def test_sidecar_is_required(self, tmp_path):
        (tmp_path / "s.bin").write_bytes(b"")
        with pytest.raises(InputNotFoundError):
            ingest.load_raw_stream(tmp_path / "s.bin")

    def test_directory_of_streams(self, tmp_path):
        ping = levin.encode_frame(LevinFrame.for_message(Command.PING, MessageKind.REQUEST))
        for i, name in enumerate(("b", "a")):
            (tmp_path / f"{name}.bin").write_bytes(ping)
            meta = StreamMeta("31.0.0.1", 18080, LOCAL, 40000 + i, stream_id=i, ts_base=float(i))
            ingest.sidecar_path(tmp_path / f"{name}.bin").write_text(json.dumps(meta.to_dict()))
        stats = IngestStats()
        records = ingest.read_capture(tmp_path, "raw-stream", stats)
        assert [r.stream_id for r in records] == [0, 1]
        assert stats.records_emitted == 2

    def test_invalid_sidecar(self, tmp_path):
        (tmp_path / "s.bin").write_bytes(b"")
        ingest.sidecar_path(tmp_path / "s.bin").write_text(json.dumps({"src_ip": "1.2.3.4"}))
        with pytest.raises(SchemaViolation):
            ingest.load_raw_stream(tmp_path / "s.bin")


class TestPeerLists:
    def test_full_handshake_list(self):
        entries = [_epee_entry(f"31.0.{i}.1") for i in range(250)]
        r = record(1.0, "31.9.9.9", LOCAL, Command.HANDSHAKE, MessageKind.RESPONSE, {"local_peerlist_new": entries})
        (plist,) = ingest.extract_peer_lists([r])
        assert plist.is_full
        assert plist.carrier is Carrier.HANDSHAKE_RESPONSE
        assert plist.source_ip == "31.9.9.9"
        assert plist.entries[3].ip == "31.0.3.1"

    def test_empty_timed_sync_list(self):
        r = record(1.0, "31.9.9.9", LOCAL, Command.TIMED_SYNC, MessageKind.RESPONSE, {"local_peerlist_new": []})
        (plist,) = ingest.extract_peer_lists([r])
        assert plist.entries == []
        assert plist.carrier is Carrier.TIMED_SYNC_RESPONSE

    def test_ping_carries_no_list(self):
        r = record(1.0, "31.9.9.9", LOCAL, Command.PING, MessageKind.RESPONSE, {"status": "OK"})
        assert list(ingest.extract_peer_lists([r])) == []

    def test_oversized_list_is_truncated(self):
        entries = [{"ip": f"31.1.{i // 250}.{i % 250 + 1}", "port": 18080} for i in range(260)]
        r = record(1.0, "31.9.9.9", LOCAL, Command.TIMED_SYNC, MessageKind.RESPONSE, {"local_peerlist_new": entries})
        stats = IngestStats()
        (plist,) = ingest.extract_peer_lists([r], stats)
        assert len(plist.entries) == 250
        assert plist.truncated == 10
        assert stats.truncated_lists == 1

    def test_parse_entry_layouts(self):
        nested = {"adr": {"type": 1, "addr": {"m_ip": ip_to_uint32("31.2.3.4"), "m_port": 18080}}, "id": 99,
                  "last_seen": 1600000000}
        entry = ingest.parse_entry(nested)
        assert (entry.ip, entry.port, entry.peer_id, entry.last_seen) == ("31.2.3.4", 18080, 99, 1600000000)
        assert entry.valid

        assert ingest.parse_entry(_epee_entry("31.2.3.5")).ip == "31.2.3.5"
        assert not ingest.parse_entry({"ip": "0.0.0.0", "port": 1}).valid
        assert not ingest.parse_entry("junk").valid
        assert ingest.parse_entry({"adr.addr.host": "abc.onion", "adr.addr.port": 1}).valid
