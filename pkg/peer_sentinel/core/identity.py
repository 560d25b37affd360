"""
Peer-ID analysis: ids that flip back and forth on one address, and groups of
addresses sharing ids.
"""
from collections import Counter, defaultdict
from typing import Any, Iterable, Optional

import networkx as nx

from ..formats.asn import AsnDatabase
from ..utils.exceptions import NotAssessable
from ..utils.helpers import ip_sort_key, setup_logger, sorted_ips
from .types import (
    AnomalyCategory,
    AnomalyFinding,
    Command,
    Connection,
    IdCluster,
    IdObservation,
    IdSource,
    MessageKind,
    PeerList,
    Sender,
)

logger = setup_logger(__name__)


def _peer_id(value: Any) -> Optional[int]:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value or None
    if isinstance(value, str):
        try:
            parsed = int(value, 16) if value.startswith("0x") else int(value)
        except ValueError:
            return None
        return parsed or None
    return None


def collect_observations(
    conns: Iterable[Connection],
    peer_lists: Iterable[PeerList] = (),
    local_ips: Iterable[str] = (),
) -> list[IdObservation]:
    """
    Gather (ts, ip, id) sightings from handshakes, Ping responses and list entries.

    Ids of 0 mean absent and are skipped, as is anything the measurement
    node itself announced.
    """
    local = set(local_ips)
    out: list[IdObservation] = []
    for c in conns:
        for m in c.messages:
            if m.sender is not Sender.REMOTE or m.decode_error:
                continue
            if m.command == Command.HANDSHAKE:
                pid, source = _peer_id(m.fields.get("node_data.peer_id")), IdSource.HANDSHAKE
            elif m.command == Command.PING and m.kind is MessageKind.RESPONSE:
                pid, source = _peer_id(m.fields.get("peer_id")), IdSource.PONG
            else:
                continue
            if pid is not None and c.remote_ip not in local:
                out.append(IdObservation(m.ts, c.remote_ip, pid, source))

    for plist in peer_lists:
        for entry in plist.entries:
            if entry.peer_id and entry.valid and entry.ip not in local:
                out.append(IdObservation(plist.ts, entry.ip, entry.peer_id, IdSource.PEER_LIST_ENTRY))

    out.sort(key=lambda o: (o.ts, ip_sort_key(o.ip), o.peer_id, o.source.value))
    return out


def trusted(observations: Iterable[IdObservation], trust_list_ids: bool = False) -> list[IdObservation]:
    """Observations allowed to drive findings; list entries only when explicitly trusted."""
    return [o for o in observations if trust_list_ids or o.source is not IdSource.PEER_LIST_ENTRY]


def detect_temporal_id_anomaly(observations: Iterable[IdObservation]) -> list[AnomalyFinding]:
    """Flag an ip whose id sequence returns to an id after announcing a different one."""
    per_ip: dict[str, list[IdObservation]] = defaultdict(list)
    for o in observations:
        per_ip[o.ip].append(o)

    findings = []
    for ip, obs in per_ip.items():
        collapsed: list[int] = []
        for o in obs:
            if not collapsed or collapsed[-1] != o.peer_id:
                collapsed.append(o.peer_id)
        seen: set[int] = set()
        returned: list[int] = []
        for pid in collapsed:
            if pid in seen and pid not in returned:
                returned.append(pid)
            seen.add(pid)
        if not returned:
            continue
        findings.append(AnomalyFinding(
            ip,
            AnomalyCategory.PEER_ID_TEMPORAL,
            {
                "switches": len(collapsed) - 1,
                "ids": [f"{pid:016x}" for pid in dict.fromkeys(collapsed)],
                "returned_ids": [f"{pid:016x}" for pid in returned],
            },
            obs[0].ts,
            obs[-1].ts,
        ))
    findings.sort(key=lambda f: ip_sort_key(f.ip))
    return findings


def id_graph(observations: Iterable[IdObservation]) -> nx.Graph:
    """Bipartite graph with ("ip", addr) and ("id", value) nodes."""
    g = nx.Graph()
    for o in observations:
        g.add_node(("ip", o.ip), bipartite=0)
        g.add_node(("id", o.peer_id), bipartite=1)
        g.add_edge(("ip", o.ip), ("id", o.peer_id))
    return g


def build_id_clusters(
    observations: Iterable[IdObservation],
    asn_db: AsnDatabase | None = None,
) -> list[IdCluster]:
    """Connected components of the ip-id graph holding at least two ips and two ids."""
    g = id_graph(observations)
    clusters = []
    for component in nx.connected_components(g):
        ips = frozenset(value for kind, value in component if kind == "ip")
        ids = frozenset(value for kind, value in component if kind == "id")
        if len(ips) < 2 or len(ids) < 2:
            continue
        asns = frozenset(asn_db.asn(ip) for ip in ips) if asn_db is not None else frozenset()
        clusters.append(IdCluster(
            ips=ips,
            ids=ids,
            edge_count=g.subgraph(component).number_of_edges(),
            asns=asns,
        ))
    clusters.sort(key=lambda c: ip_sort_key(sorted_ips(c.ips)[0]))
    return clusters


def cluster_findings(clusters: Iterable[IdCluster], observations: Iterable[IdObservation]) -> list[AnomalyFinding]:
    """One PeerIdCluster finding per member ip."""
    times: dict[str, list[float]] = defaultdict(list)
    for o in observations:
        times[o.ip].append(o.ts)

    findings = []
    for cluster in clusters:
        members = sorted_ips(cluster.ips)
        for ip in members:
            findings.append(AnomalyFinding(
                ip,
                AnomalyCategory.PEER_ID_CLUSTER,
                {
                    "cluster_ips": members,
                    "cluster_ids": len(cluster.ids),
                    "edge_count": cluster.edge_count,
                    "asn_diversity": len(cluster.asns),
                },
                min(times[ip], default=None),
                max(times[ip], default=None),
            ))
    findings.sort(key=lambda f: ip_sort_key(f.ip))
    return findings


def id_multiplicity_stats(observations: Iterable[IdObservation]) -> dict:
    """
    Distinct-id counts per ip and the share of ips that announced exactly one.

    Raises:
        NotAssessable: No observations
    """
    ids_per_ip: dict[str, set[int]] = defaultdict(set)
    for o in observations:
        ids_per_ip[o.ip].add(o.peer_id)
    if not ids_per_ip:
        raise NotAssessable("no peer-id observations")
    histogram = Counter(len(ids) for ids in ids_per_ip.values())
    return {
        "ips": len(ids_per_ip),
        "fraction_single_id": histogram[1] / len(ids_per_ip),
        "histogram": {str(k): histogram[k] for k in sorted(histogram)},
    }
