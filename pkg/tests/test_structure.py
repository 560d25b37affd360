import random
from collections import defaultdict

import pytest

from peer_sentinel.core import structure
from peer_sentinel.core.types import AnomalyCategory, AnomalyFinding
from peer_sentinel.formats import asn
from peer_sentinel.utils.exceptions import DbMissing, EmptyGraph

from .factories import peer_list


class TestPromotionGraph:
    def test_multiplicity_accumulates(self):
        g = structure.build_promotion_graph([peer_list("A", ["C"]), peer_list("A", ["C", "D"])])
        assert g.multiplicity("A", "C") == 2
        assert g.multiplicity("A", "D") == 1
        assert g.multiplicity("C", "A") == 0

    def test_empty_list_adds_no_edges(self):
        g = structure.build_promotion_graph([peer_list("A", [])])
        assert g.graph.number_of_edges() == 0
        assert g.nodes == {"A"}

    def test_self_promotion_excluded_from_in_degree(self):
        g = structure.build_promotion_graph([peer_list("A", ["A", "B"]), peer_list("C", ["A"])])
        assert g.self_promotions == 1
        assert g.in_degree("A") == 1
        assert g.promoted() == {"A", "B"}

    def test_two_promoters(self):
        g = structure.build_promotion_graph([peer_list("A", ["C"]), peer_list("B", ["C"])])
        assert g.in_degree("C") == 2


class TestInDegreeStats:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force(self, seed):
        rng = random.Random(seed)
        nodes = [f"31.0.0.{i}" for i in range(1, 40)]
        lists = [peer_list(rng.choice(nodes), rng.sample(nodes, rng.randrange(1, 15))) for _ in range(60)]
        stats = structure.in_degree_stats(structure.build_promotion_graph(lists), top_k=5)

        promoters: dict[str, set[str]] = defaultdict(set)
        everyone: set[str] = set()
        for plist in lists:
            everyone.add(plist.source_ip)
            for ip in plist.ips:
                everyone.add(ip)
                if ip != plist.source_ip:
                    promoters[ip].add(plist.source_ip)
        degrees = sorted(len(promoters[n]) for n in everyone)
        assert stats["nodes"] == len(everyone)
        assert stats["mean"] == pytest.approx(sum(degrees) / len(degrees))
        assert stats["top_k"][0]["in_degree"] == degrees[-1]

    def test_star(self):
        lists = [peer_list(f"31.0.0.{i}", ["31.0.1.1"]) for i in range(1, 6)]
        stats = structure.in_degree_stats(structure.build_promotion_graph(lists))
        assert stats["mean"] == pytest.approx(5 / 6)
        assert stats["top_k"][0] == {"ip": "31.0.1.1", "in_degree": 5}

    def test_skewed_promotion_surfaces_hubs(self):
        hubs = ["31.9.0.1", "31.9.0.2", "31.9.0.3"]
        lists = [peer_list(f"32.{i // 250}.{i % 250}.1", hubs) for i in range(120)]
        lists += [peer_list(f"33.0.{i}.1", [f"34.0.{i}.1", f"34.0.{i + 1}.1"]) for i in range(200)]
        stats = structure.in_degree_stats(structure.build_promotion_graph(lists), top_k=3)
        assert sorted(row["ip"] for row in stats["top_k"]) == hubs
        assert all(row["in_degree"] == 120 for row in stats["top_k"])

    def test_empty_graph(self):
        with pytest.raises(EmptyGraph):
            structure.in_degree_stats(structure.build_promotion_graph([]))


class TestSaturation:
    def test_fully_saturated(self):
        ips = [f"31.5.5.{h}" for h in range(1, 256)] + ["31.6.6.6"]
        rows = structure.subnet_saturation(ips)
        assert rows[0]["subnet"] == "31.5.5.0/24"
        assert rows[0]["count"] == 255
        assert structure.saturated_subnets(rows, 100) == ["31.5.5.0/24"]
        assert structure.saturation_median(rows) == pytest.approx(128.0)

    def test_boundary(self):
        rows = structure.subnet_saturation([f"31.5.5.{h}" for h in range(1, 100)])
        assert rows[0]["count"] == 99
        assert structure.saturation_findings(rows, 100) == []
        assert len(structure.saturation_findings(rows, 99)) == 99

    def test_typical_subnets(self):
        rows = structure.subnet_saturation([f"31.{i}.0.1" for i in range(20)])
        assert structure.saturation_median(rows) == 1.0
        assert structure.saturated_subnets(rows, 100) == []

    def test_connected_split_and_findings(self):
        members = [f"31.5.5.{h}" for h in range(1, 101)]
        rows = structure.subnet_saturation(members + ["onion.example"], connected=members[:3])
        (row,) = rows
        assert (row["connected_count"], row["promoted_only_count"]) == (3, 97)
        findings = structure.saturation_findings(rows, 100)
        assert len(findings) == 100
        assert findings[0].category is AnomalyCategory.SATURATED_SUBNET_MEMBER
        assert findings[0].evidence == {"subnet": "31.5.5.0/24", "subnet_count": 100}

    @pytest.mark.parametrize("seed", range(100))
    def test_counts_match_brute_force(self, seed):
        rng = random.Random(seed)
        ips = [f"31.{rng.randrange(3)}.{rng.randrange(4)}.{rng.randrange(1, 255)}" for _ in range(rng.randrange(1, 800))]
        rows = structure.subnet_saturation(ips)
        assert [r["count"] for r in rows] == sorted((r["count"] for r in rows), reverse=True)
        expected: dict[str, set[str]] = defaultdict(set)
        for ip in ips:
            a, b, c, _ = ip.split(".")
            expected[f"{a}.{b}.{c}.0/24"].add(ip)
        assert {r["subnet"]: r["count"] for r in rows} == {k: len(v) for k, v in expected.items()}


class TestAsnRollup:
    DB = "prefix,asn,org\n10.0.0.0/8,64500,Big\n10.1.0.0/16,64501,Small\n"

    def test_one_prefix(self):
        db = asn.parse(self.DB)
        assert structure.asn_rollup(["10.2.0.1", "10.3.0.1", "10.4.0.1"], db) == [
            {"asn": 64500, "org": "Big", "count": 3}
        ]

    def test_longest_prefix_wins(self):
        db = asn.parse(self.DB)
        assert structure.asn_rollup(["10.1.2.3"], db) == [{"asn": 64501, "org": "Small", "count": 1}]

    def test_unmatched_bucket(self):
        db = asn.parse(self.DB)
        assert structure.asn_rollup(["192.0.2.1", "31.5.5.0/24"], db) == [{"asn": 0, "org": "unknown", "count": 2}]

    def test_needs_database(self):
        with pytest.raises(DbMissing):
            structure.asn_rollup(["10.0.0.1"], None)

    def test_per_category(self):
        db = asn.parse(self.DB)
        findings = [
            AnomalyFinding("10.1.0.5", AnomalyCategory.PING_FLOODING, {"pings": 30}),
            AnomalyFinding("10.2.0.5", AnomalyCategory.PING_FLOODING, {"pings": 30}),
            AnomalyFinding("10.3.0.5", AnomalyCategory.PING_FLOODING, {"pings": 30}),
            AnomalyFinding("10.2.0.5", AnomalyCategory.SUPPORT_FLAGS_OMISSION, {"omissions": 1}),
        ]
        rollup = structure.category_asn_rollup(findings, db)
        assert list(rollup) == ["SupportFlagsOmission", "PingFlooding"]
        assert rollup["PingFlooding"] == {
            "ips": 3,
            "unique_asns": 2,
            "asns": [{"asn": 64500, "org": "Big", "count": 2}, {"asn": 64501, "org": "Small", "count": 1}],
        }
        assert structure.category_asn_rollup([], db) == {}
        with pytest.raises(DbMissing):
            structure.category_asn_rollup(findings, None)
