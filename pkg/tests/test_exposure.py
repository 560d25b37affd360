import pytest

from peer_sentinel.core import exposure
from peer_sentinel.core.types import AnomalyCategory, AnomalyFinding, Direction
from peer_sentinel.formats import asn
from peer_sentinel.formats.banlist import BanList

from .factories import connection, handshake, peer_list, standard_connection

SHORT = AnomalyCategory.SHORT_LIVED_FLOODING
LOW = AnomalyCategory.LOW_DIVERSITY_PEER_LIST


def _finding(ip, category=SHORT):
    return AnomalyFinding(ip, category, {"count": 1})


def _pool(n=10, flagged=2):
    conns = [standard_connection(f"31.0.0.{i}") for i in range(1, n + 1)]
    findings = [_finding(f"31.0.0.{i}") for i in range(1, flagged + 1)]
    return conns, findings


def _short(ip, start=0.0, end=59.9, direction=Direction.OUTGOING):
    return connection(ip, handshake(start), direction, end_ts=end)


class TestProfiles:
    def test_flagged_fraction(self):
        conns, findings = _pool()
        profiles = exposure.build_profiles(findings, conns)
        assert exposure.flagged_fraction(profiles) == pytest.approx(0.2)
        assert exposure.flagged_set(profiles) == {"31.0.0.1", "31.0.0.2"}

    def test_promoted_only_peers_not_in_denominator(self):
        conns, findings = _pool()
        findings.append(_finding("31.9.9.9", LOW))
        profiles = exposure.build_profiles(findings, conns, promoted=["31.9.9.9"])
        assert exposure.flagged_fraction(profiles) == pytest.approx(0.2)
        outsider = next(p for p in profiles if p.ip == "31.9.9.9")
        assert outsider.promoted and not outsider.connected

    def test_no_connections(self):
        assert exposure.flagged_fraction(exposure.build_profiles([_finding("31.0.0.1")], [])) is None

    def test_profile_record(self):
        conns = [standard_connection("31.0.0.1", duration=300.0), standard_connection("31.0.0.1", start=400.0)]
        (p,) = exposure.build_profiles([_finding("31.0.0.1", LOW), _finding("31.0.0.1")], conns)
        d = p.to_dict()
        assert d["categories"] == [LOW.value, SHORT.value]
        assert d["connection_count"] == 2
        assert d["subnet"] == "31.0.0.0/24"

    def test_category_counts(self):
        profiles = exposure.build_profiles([_finding("31.0.0.1"), _finding("31.0.0.2"), _finding("31.0.0.2", LOW)], [])
        counts = exposure.category_counts(profiles)
        assert counts[SHORT.value] == 2
        assert counts[LOW.value] == 1
        assert counts[AnomalyCategory.PING_FLOODING.value] == 0
        assert len(counts) == len(AnomalyCategory)


class TestOverlap:
    def _profiles(self, asn_db=None):
        findings = [_finding("31.0.0.1", LOW), _finding("31.0.0.1"), _finding("31.0.1.1")]
        return exposure.build_profiles(findings, [], asn_db=asn_db)

    def test_cells_are_symmetric(self):
        m = exposure.overlap_matrix(self._profiles())
        assert m.cell(LOW.value, SHORT.value) == m.cell(SHORT.value, LOW.value) == 1
        assert m.cell(SHORT.value, SHORT.value) == 2
        assert m.cell(AnomalyCategory.PING_FLOODING.value, SHORT.value) == 0

    def test_as_level(self):
        db = asn.parse("prefix,asn,org\n31.0.0.0/16,64500,Example\n")
        m = exposure.overlap_matrix(self._profiles(db))
        assert m.cell(SHORT.value, SHORT.value, level="as") == 1
        assert m.cell(LOW.value, SHORT.value, level="as") == 1

    def test_banlist_row(self):
        m = exposure.overlap_matrix(self._profiles(), BanList(subnets={"31.0.1.0/24"}))
        assert m.categories[-1] == exposure.BANLIST_CATEGORY
        assert m.cell(exposure.BANLIST_CATEGORY, SHORT.value) == 1
        assert m.cell(exposure.BANLIST_CATEGORY, LOW.value) == 0


class TestTimeline:
    def test_single_bucket(self):
        conns = [_short(f"31.0.0.{i}") for i in range(1, 11)]
        timeline = exposure.exposure_timeline(conns, {"31.0.0.1", "31.0.0.2"})
        (row,) = timeline["series"]
        assert row["outgoing_active"] == 10
        assert row["outgoing_fraction"] == pytest.approx(0.2)
        assert row["incoming_fraction"] is None
        assert timeline["average_outgoing"] == pytest.approx(0.2)
        assert timeline["average_incoming"] is None

    def test_empty_bucket_is_null(self):
        conns = [_short("31.0.0.1", 0.0, 10.0), _short("31.0.0.2", 200.0, 210.0)]
        series = exposure.exposure_timeline(conns, {"31.0.0.2"})["series"]
        assert len(series) == 4
        assert series[1]["outgoing_fraction"] is None
        assert series[3]["outgoing_fraction"] == 1.0
        assert series[0]["outgoing_fraction"] == 0.0

    def test_no_connections(self):
        assert exposure.exposure_timeline([], set())["series"] == []

    def test_what_if(self):
        conns = [_short(f"31.0.0.{i}") for i in range(1, 11)]
        result = exposure.banlist_what_if(conns, {"31.0.0.1", "31.0.0.2"}, BanList(ips={"31.0.0.1"}))
        assert result["connections_removed"] == 1
        assert result["average_outgoing"] == pytest.approx(1 / 9)


class TestPeerListExposure:
    IPS = [f"31.{i // 200}.{i % 200}.1" for i in range(250)]

    def test_fraction(self):
        flagged = set(self.IPS[:25])
        result = exposure.peer_list_exposure([peer_list("31.9.9.9", self.IPS)], flagged)
        assert result["full_lists"] == 1
        assert result["mean"] == pytest.approx(0.1)
        assert result["every_list_contaminated"]

    def test_clean_list(self):
        result = exposure.peer_list_exposure([peer_list("31.9.9.9", self.IPS)], set())
        assert result["mean"] == 0.0
        assert not result["every_list_contaminated"]

    def test_partial_lists_ignored(self):
        result = exposure.peer_list_exposure([peer_list("31.9.9.9", self.IPS[:100])], set(self.IPS))
        assert result["full_lists"] == 0
        assert result["mean"] is None

    def test_promotion_share(self):
        lists = [peer_list("31.9.9.1", self.IPS), peer_list("31.9.9.2", self.IPS[1:] + ["31.8.0.1"])]
        assert exposure.banlist_promotion_share(lists, BanList(ips={self.IPS[0]})) == pytest.approx(0.5)
        assert exposure.banlist_promotion_share([], BanList()) is None


def test_emit_banlist_folds_ips_into_subnets():
    findings = [_finding("31.0.0.1"), _finding("31.0.0.2"), _finding("31.5.5.7")]
    profiles = exposure.build_profiles(findings, [])
    banlist = exposure.emit_banlist(profiles, ["31.5.5.0/24"])
    assert banlist.ips == {"31.0.0.1", "31.0.0.2"}
    assert banlist.subnets == {"31.5.5.0/24"}
    assert banlist.render() == "31.5.5.0/24\n31.0.0.1\n31.0.0.2\n"
