"""
Network structure: the promotion graph built from exchanged peer lists,
/24 subnet saturation and AS roll-ups.
"""
from collections import Counter, defaultdict
from typing import Iterable, Optional

import networkx as nx
import numpy as np

from ..formats.asn import AsnDatabase
from ..utils.exceptions import DbMissing, EmptyGraph
from ..utils.helpers import ip_sort_key, is_ipv4, setup_logger, sorted_ips, subnet24
from .types import AnomalyCategory, AnomalyFinding, PeerList

logger = setup_logger(__name__)


class PromotionGraph:
    """
    Directed promoter -> promoted graph.

    Edge attribute `weight` counts how often the promotion was seen across
    lists. Self-promotions are kept as edges and also tallied on their own.
    """

    def __init__(self):
        self.graph = nx.DiGraph()
        self.self_promotions = 0

    def add_list(self, plist: PeerList) -> None:
        src = plist.source_ip
        self.graph.add_node(src)
        for entry in plist.entries:
            if not entry.ip:
                continue
            if entry.ip == src:
                self.self_promotions += 1
            if self.graph.has_edge(src, entry.ip):
                self.graph[src][entry.ip]["weight"] += 1
            else:
                self.graph.add_edge(src, entry.ip, weight=1)

    @property
    def nodes(self) -> set[str]:
        return set(self.graph.nodes)

    def multiplicity(self, src: str, dst: str) -> int:
        data = self.graph.get_edge_data(src, dst)
        return data["weight"] if data else 0

    def in_degree(self, node: str) -> int:
        """Distinct promoters of a node, self excluded."""
        return sum(1 for p in self.graph.predecessors(node) if p != node)

    def promoted(self) -> set[str]:
        return {v for _, v in self.graph.edges}


def build_promotion_graph(peer_lists: Iterable[PeerList]) -> PromotionGraph:
    g = PromotionGraph()
    for plist in peer_lists:
        g.add_list(plist)
    return g


def in_degree_stats(g: PromotionGraph, top_k: int = 10) -> dict:
    """
    Raises:
        EmptyGraph: The graph has no nodes
    """
    if g.graph.number_of_nodes() == 0:
        raise EmptyGraph("promotion graph has no nodes")
    degrees = {n: g.in_degree(n) for n in g.graph.nodes}
    values = np.fromiter(degrees.values(), dtype=float)
    ranked = sorted(degrees.items(), key=lambda kv: (-kv[1], ip_sort_key(kv[0])))
    return {
        "nodes": len(degrees),
        "edges": g.graph.number_of_edges(),
        "self_promotions": g.self_promotions,
        "mean": float(values.mean()),
        "median": float(np.median(values)),
        "top_k": [{"ip": ip, "in_degree": d} for ip, d in ranked[:top_k]],
    }


def subnet_saturation(
    all_ips: Iterable[str],
    connected: Optional[Iterable[str]] = None,
    asn_db: AsnDatabase | None = None,
) -> list[dict]:
    """
    Distinct IPv4 addresses per /24, most saturated first.

    `connected` splits each subnet's members into those seen on a connection
    and those only ever promoted in lists.
    """
    connected_set = set(connected or ())
    members: dict[str, set[str]] = defaultdict(set)
    for ip in all_ips:
        if is_ipv4(ip):
            members[subnet24(ip)].add(ip)

    rows = []
    for subnet, ips in members.items():
        asn, org = asn_db.lookup(subnet.split("/")[0]) if asn_db is not None else (0, "unknown")
        n_connected = len(ips & connected_set)
        rows.append({
            "subnet": subnet,
            "count": len(ips),
            "members": sorted_ips(ips),
            "asn": asn,
            "org": org,
            "connected_count": n_connected,
            "promoted_only_count": len(ips) - n_connected,
        })
    rows.sort(key=lambda r: (-r["count"], ip_sort_key(r["subnet"].split("/")[0])))
    return rows


def saturation_median(rows: list[dict]) -> float | None:
    if not rows:
        return None
    return float(np.median([r["count"] for r in rows]))


def saturation_findings(rows: Iterable[dict], threshold: int) -> list[AnomalyFinding]:
    findings = []
    for row in rows:
        if row["count"] < threshold:
            continue
        for ip in row["members"]:
            findings.append(AnomalyFinding(
                ip,
                AnomalyCategory.SATURATED_SUBNET_MEMBER,
                {"subnet": row["subnet"], "subnet_count": row["count"]},
            ))
    findings.sort(key=lambda f: ip_sort_key(f.ip))
    return findings


def saturated_subnets(rows: Iterable[dict], threshold: int) -> list[str]:
    return [r["subnet"] for r in rows if r["count"] >= threshold]


def asn_rollup(items: Iterable[str], db: AsnDatabase | None) -> list[dict]:
    """
    Count addresses (or /24 subnets, by network address) per ASN.

    Raises:
        DbMissing: No ASN database was loaded
    """
    if db is None:
        raise DbMissing("ASN roll-up needs --asn-db")
    counts: Counter = Counter()
    orgs: dict[int, str] = {}
    for item in items:
        asn, org = db.lookup(item.split("/")[0])
        counts[asn] += 1
        orgs[asn] = org
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [{"asn": asn, "org": orgs[asn], "count": n} for asn, n in ranked]


def category_asn_rollup(findings: Iterable[AnomalyFinding], db: AsnDatabase | None) -> dict[str, dict]:
    """
    Per anomaly category: flagged ips, the number of distinct ASes they sit
    in and the per-ASN counts, in report category order.

    Raises:
        DbMissing: No ASN database was loaded
    """
    ips: dict[AnomalyCategory, set[str]] = defaultdict(set)
    for f in findings:
        ips[f.category].add(f.ip)
    out: dict[str, dict] = {}
    for category in sorted(ips, key=lambda c: c.order):
        rows = asn_rollup(sorted_ips(ips[category]), db)
        out[category.value] = {"ips": len(ips[category]), "unique_asns": len(rows), "asns": rows}
    return out
