import json

import pytest

from peer_sentinel.cli.main import create_argument_parser, run
from peer_sentinel.core import ingest


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--scenario", "all-anomalies", "--seed", "7", "--raw", "--out", str(out), "-q"]) == 0
    return out


def test_simulate_writes_capture(simulated):
    assert (simulated / "capture.jsonl").is_file()
    assert (simulated / "labels.txt").read_text().strip()
    assert json.loads((simulated / "scenario.json").read_text())["seed"] == 7
    assert list((simulated / "streams").glob("*.bin"))


def test_analyze_with_findings_exits_2(simulated, tmp_path):
    code = run(["analyze", "-i", str(simulated / "capture.jsonl"), "-o", str(tmp_path), "-j", "1", "-q"])
    assert code == 2
    for name in ("report.json", "findings.json", "banlist.txt", "summary.txt"):
        assert (tmp_path / name).is_file()


def test_analyze_clean_capture_exits_0(tmp_path):
    assert run(["simulate", "-s", "standard", "-o", str(tmp_path / "sim"), "-q"]) == 0
    code = run(["analyze", "-i", str(tmp_path / "sim" / "capture.jsonl"), "-o", str(tmp_path / "out"), "-q"])
    assert code == 0


@pytest.mark.parametrize("bad_line", [
    b'{"ts": "\xff\xfe"}\n',
    b'{"ts": NaN, "src_ip": "31.0.0.9", "src_port": 18080, "dst_ip": "10.0.0.1", "dst_port": 1, '
    b'"command": 1003, "kind": "request"}\n',
])
def test_analyze_survives_a_malformed_line(tmp_path, bad_line):
    assert run(["simulate", "-s", "standard", "-o", str(tmp_path / "sim"), "-q"]) == 0
    capture = tmp_path / "sim" / "capture.jsonl"
    capture.write_bytes(capture.read_bytes() + bad_line)
    assert run(["analyze", "-i", str(capture), "-o", str(tmp_path / "out"), "-q"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["ingest"]["records_skipped"] == 1


def test_analyze_raw_streams(simulated, tmp_path):
    code = run(["analyze", "-i", str(simulated / "streams"), "-f", "raw-stream", "-o", str(tmp_path), "-q"])
    assert code == 2


def test_analyze_missing_input_exits_1(tmp_path):
    assert run(["analyze", "-i", str(tmp_path / "nope.jsonl"), "-o", str(tmp_path), "-q"]) == 1


@pytest.mark.parametrize("jobs", ["0", "-1"])
def test_analyze_rejects_non_positive_jobs(simulated, tmp_path, jobs):
    argv = ["analyze", "-i", str(simulated / "capture.jsonl"), "-o", str(tmp_path), "-j", jobs, "-q"]
    assert run(argv) == 1
    assert not (tmp_path / "report.json").exists()


def test_local_ip_count_must_match(simulated, tmp_path):
    capture = str(simulated / "capture.jsonl")
    argv = ["analyze", "-i", capture, "--local-ip", "10.0.0.1", "--local-ip", "10.0.0.2",
            "--local-ip", "10.0.0.3", "-i", capture, "-o", str(tmp_path), "-q"]
    assert run(argv) == 1


def test_unknown_scenario_exits_1(tmp_path):
    assert run(["simulate", "-s", "no-such-preset", "-o", str(tmp_path), "-q"]) == 1


def test_decode(simulated, tmp_path):
    out = tmp_path / "decoded.jsonl"
    assert run(["decode", "-i", str(simulated / "streams"), "-o", str(out), "-q"]) == 0
    decoded = ingest.read_capture(out, "jsonl")
    original = ingest.read_capture(simulated / "capture.jsonl", "jsonl")
    assert decoded == original


def test_banlist_emit_matches_analyze(simulated, tmp_path, capsys):
    run(["analyze", "-i", str(simulated / "capture.jsonl"), "-o", str(tmp_path), "-q"])
    capsys.readouterr()
    assert run(["banlist", "emit", "--report", str(tmp_path / "report.json"), "-q"]) == 0
    assert capsys.readouterr().out == (tmp_path / "banlist.txt").read_text()


def test_banlist_emit_rejects_other_json(tmp_path):
    path = tmp_path / "report.json"
    path.write_text('{"hello": 1}')
    assert run(["banlist", "emit", "--report", str(path), "-q"]) == 1


def test_banlist_diff(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text("10.0.0.0/24\n")
    b.write_text("10.0.0.5\n10.9.9.9\n")
    out = tmp_path / "diff.json"
    assert run(["banlist", "diff", str(a), str(b), "--out", str(out), "-q"]) == 0
    diff = json.loads(out.read_text())
    assert len(diff["only_a"]) == 253
    assert diff["only_b"] == ["10.9.9.9"]


def test_banlist_diff_parse_error(tmp_path):
    a = tmp_path / "a.txt"
    a.write_text("not an address\n")
    assert run(["banlist", "diff", str(a), str(a), "-q"]) == 1


def test_config_defaults(capsys):
    assert run(["config", "--defaults"]) == 0
    out = capsys.readouterr().out
    assert "diversity_threshold = 0.04" in out
    assert "saturation_threshold = 100" in out


def test_config_effective(tmp_path, capsys):
    path = tmp_path / "c.conf"
    path.write_text("top_k = 3\n")
    assert run(["config", "-c", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["top_k"] == 3


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        create_argument_parser().parse_args([])
