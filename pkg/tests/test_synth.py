import json

import pytest

from peer_sentinel.core import ingest, synth
from peer_sentinel.core.detectors import peer_list_diversity
from peer_sentinel.core.synth import Behavior, PeerSpec, Scenario
from peer_sentinel.core.types import AnomalyCategory, Direction
from peer_sentinel.utils.config import SIGNATURE_FRAGMENT_SIZE
from peer_sentinel.utils.exceptions import InvalidScenario


def _peer_ip(scenario: Scenario, behavior: Behavior) -> str:
    return next(p.ip for p in scenario.peers if p.behavior is behavior)


@pytest.fixture(scope="module")
def all_anomalies():
    scenario = synth.preset("all-anomalies", seed=7)
    return scenario, synth.generate(scenario)


def test_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        synth.write_capture(tmp_path / name, synth.generate(synth.preset("all-anomalies", seed=3)))
    for filename in (synth.CAPTURE_FILE, synth.LABELS_FILE):
        assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()


def test_different_seeds_differ():
    a = synth.generate(synth.preset("standard", seed=1)).records
    b = synth.generate(synth.preset("standard", seed=2)).records
    assert [r.ts for r in a] != [r.ts for r in b]


def test_every_anomalous_behavior_is_labelled(all_anomalies):
    scenario, capture = all_anomalies
    for spec in scenario.peers:
        category = synth.BEHAVIOR_CATEGORY[spec.behavior]
        if category is None:
            assert spec.ip not in capture.labels
        else:
            assert category in capture.labels[spec.ip]


def test_partners_and_siblings_are_labelled(all_anomalies):
    _, capture = all_anomalies
    by_category: dict[AnomalyCategory, int] = {}
    for categories in capture.labels.values():
        for c in categories:
            by_category[c] = by_category.get(c, 0) + 1
    assert by_category[AnomalyCategory.HIGH_SIMILARITY_PEER_LIST] == 2
    assert by_category[AnomalyCategory.PEER_ID_CLUSTER] == 2
    assert by_category[AnomalyCategory.SATURATED_SUBNET_MEMBER] == 1 + synth.SATURATED_SIBLINGS


def test_standard_preset_has_no_labels():
    assert synth.generate(synth.preset("standard")).labels == {}


def test_labels_file_round_trip(tmp_path, all_anomalies):
    _, capture = all_anomalies
    _, labels_path = synth.write_capture(tmp_path, capture)
    assert synth.read_labels(labels_path) == capture.labels


def test_low_diversity_lists(all_anomalies):
    scenario, capture = all_anomalies
    source = _peer_ip(scenario, Behavior.LOW_DIVERSITY_PROMOTER)
    lists = [p for p in ingest.extract_peer_lists(capture.records) if p.source_ip == source]
    assert lists
    assert all(peer_list_diversity(p) <= 0.028 for p in lists)


def test_standard_lists_are_diverse(all_anomalies):
    scenario, capture = all_anomalies
    source = _peer_ip(scenario, Behavior.STANDARD)
    lists = [p for p in ingest.extract_peer_lists(capture.records) if p.source_ip == source]
    assert all(peer_list_diversity(p) == 1.0 for p in lists)


def test_fragmenter_sends_signature_only_first_segment(all_anomalies):
    scenario, capture = all_anomalies
    source = _peer_ip(scenario, Behavior.SIG_ONLY_FRAGMENTER)
    sent = [r for r in capture.records if r.src_ip == source]
    assert sent
    assert all(r.segment_lengths[0] == SIGNATURE_FRAGMENT_SIZE for r in sent)
    others = [r for r in capture.records if r.src_ip != source and r.segment_lengths]
    assert all(r.segment_lengths[0] != SIGNATURE_FRAGMENT_SIZE for r in others)


def test_last_seen_entries(all_anomalies):
    scenario, capture = all_anomalies
    source = _peer_ip(scenario, Behavior.LAST_SEEN_SENDER)
    (plist, *_) = [p for p in ingest.extract_peer_lists(capture.records) if p.source_ip == source]
    assert all(e.last_seen == synth.LAST_SEEN_PLACEHOLDER for e in plist.entries)


def test_contamination_share():
    scenario = synth.preset("contamination", seed=5)
    capture = synth.generate(scenario)
    saturated = {ip for ip, cats in capture.labels.items() if AnomalyCategory.SATURATED_SUBNET_MEMBER in cats}
    standard = {p.ip for p in scenario.peers if p.behavior is Behavior.STANDARD}
    lists = [p for p in ingest.extract_peer_lists(capture.records) if p.source_ip in standard]
    assert lists
    for plist in lists:
        assert sum(1 for e in plist.entries if e.ip in saturated) in (42, 43)


def test_raw_streams_decode_to_the_same_records(tmp_path):
    scenario = synth.preset("standard", seed=11)
    capture_path, _ = synth.write_capture(tmp_path / "jsonl", synth.generate(scenario))
    synth.write_raw(tmp_path / "raw", synth.generate_raw(scenario))
    from_jsonl = ingest.read_capture(capture_path, "jsonl")
    from_raw = ingest.read_capture(tmp_path / "raw", "raw-stream")
    assert from_raw == from_jsonl == synth.generate(scenario).records


def test_raw_sidecars(tmp_path):
    paths = synth.write_raw(tmp_path, synth.generate_raw(synth.preset("standard")))
    assert paths
    meta = json.loads(ingest.sidecar_path(paths[0]).read_text())
    assert ingest.StreamMeta.from_dict(meta).stream_id == 1


def test_empty_scenario():
    scenario = Scenario(peers=[])
    assert synth.generate(scenario).records == []
    assert synth.generate_raw(scenario) == []


def test_empty_scenario_writes_no_streams(tmp_path):
    assert synth.write_raw(tmp_path, []) == []
    assert list(tmp_path.iterdir()) == []


def test_scenario_document_round_trip():
    scenario = synth.preset("exposure", seed=4)
    assert Scenario.from_dict(scenario.to_dict()) == scenario


@pytest.mark.parametrize("scenario", [
    Scenario(peers=[PeerSpec("31.0.0.1"), PeerSpec("31.0.0.1")]),
    Scenario(peers=[PeerSpec("10.0.0.1")]),
    Scenario(peers=[PeerSpec("not-an-ip")]),
    Scenario(peers=[PeerSpec("31.0.0.1", Behavior.PING_FLOODER, Direction.OUTGOING)]),
    Scenario(duration=300.0, peers=[PeerSpec("31.0.0.1", Behavior.THROTTLER)]),
    Scenario(list_contamination=0.2, peers=[PeerSpec("31.0.0.1")]),
    Scenario(seed=-1),
    Scenario(duration=0.0),
    Scenario(jitter=20.0),
])
def test_invalid_scenarios(scenario):
    with pytest.raises(InvalidScenario):
        scenario.validate()


def test_unknown_behavior():
    with pytest.raises(InvalidScenario):
        Scenario.from_dict({"peers": [{"ip": "31.0.0.1", "behavior": "moonwalker"}]})


def test_unknown_preset():
    with pytest.raises(InvalidScenario):
        synth.preset("chaos")


def test_load_scenario(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({"seed": 9, "peers": [{"ip": "31.0.0.1", "behavior": "last_seen_sender"}]}))
    scenario = synth.load_scenario(path)
    assert scenario.peers[0].behavior is Behavior.LAST_SEEN_SENDER
    path.write_text("{broken")
    with pytest.raises(InvalidScenario):
        synth.load_scenario(path)
