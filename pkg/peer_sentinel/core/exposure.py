"""
Exposure reporting: per-peer profiles, category overlap, how much of the
connection pool and of exchanged peer lists non-standard peers occupy, and
the ban list derived from all of it.
"""
from collections import defaultdict
from typing import Iterable, Optional

import numpy as np

from ..formats.asn import AsnDatabase
from ..formats.banlist import BanList, from_entries
from ..utils.config import DEFAULT_BUCKET_SECONDS, PEER_LIST_MAX
from ..utils.helpers import ip_sort_key, is_ipv4, sorted_ips, subnet24
from .types import (
    AnomalyCategory,
    AnomalyFinding,
    Connection,
    Direction,
    IdObservation,
    OverlapMatrix,
    PeerList,
    PeerProfile,
)

BANLIST_CATEGORY = "BanList"


def build_profiles(
    findings: Iterable[AnomalyFinding],
    conns: Iterable[Connection],
    id_obs: Iterable[IdObservation] = (),
    asn_db: AsnDatabase | None = None,
    promoted: Iterable[str] = (),
) -> list[PeerProfile]:
    """One profile per ip that was connected, promoted or named by a finding."""
    profiles: dict[str, PeerProfile] = {}

    def profile(ip: str) -> PeerProfile:
        p = profiles.get(ip)
        if p is None:
            asn, org = asn_db.lookup(ip) if asn_db is not None else (0, "unknown")
            p = profiles[ip] = PeerProfile(ip=ip, subnet=subnet24(ip), asn=asn, org=org)
        return p

    for c in conns:
        p = profile(c.remote_ip)
        p.connected = True
        p.connection_count += 1
        p.durations.append(c.duration)
    for ip in promoted:
        profile(ip).promoted = True
    for o in id_obs:
        profile(o.ip).ids.add(o.peer_id)
    for f in findings:
        profile(f.ip).categories[f.category] = f.evidence

    return [profiles[ip] for ip in sorted_ips(profiles)]


def flagged_fraction(profiles: Iterable[PeerProfile]) -> Optional[float]:
    """Share of connected peers with at least one finding; None without connected peers."""
    connected = [p for p in profiles if p.connected]
    if not connected:
        return None
    return sum(1 for p in connected if p.flagged) / len(connected)


def flagged_set(profiles: Iterable[PeerProfile]) -> set[str]:
    return {p.ip for p in profiles if p.flagged}


def overlap_matrix(profiles: Iterable[PeerProfile], banlist: BanList | None = None) -> OverlapMatrix:
    """
    Pairwise overlap of the ip sets (and AS sets) behind each category.

    With a ban list, an extra `BanList` row holds the profiled ips it covers.
    """
    profiles = list(profiles)
    labels = [c.value for c in AnomalyCategory]
    ip_sets: dict[str, set[str]] = {label: set() for label in labels}
    as_sets: dict[str, set[int]] = {label: set() for label in labels}
    for p in profiles:
        for c in p.categories:
            ip_sets[c.value].add(p.ip)
            as_sets[c.value].add(p.asn)
    if banlist is not None:
        labels.append(BANLIST_CATEGORY)
        covered = [p for p in profiles if banlist.covers(p.ip)]
        ip_sets[BANLIST_CATEGORY] = {p.ip for p in covered}
        as_sets[BANLIST_CATEGORY] = {p.asn for p in covered}

    ip_matrix = [[len(ip_sets[a] & ip_sets[b]) for b in labels] for a in labels]
    as_matrix = [[len(as_sets[a] & as_sets[b]) for b in labels] for a in labels]
    return OverlapMatrix(categories=labels, ip_matrix=ip_matrix, as_matrix=as_matrix)


def _mean(values: list[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def exposure_timeline(
    conns: Iterable[Connection],
    flagged: set[str],
    bucket: float = DEFAULT_BUCKET_SECONDS,
) -> dict:
    """
    Per-bucket share of active incoming and outgoing connections held by flagged peers.

    A connection is active in [t, t + bucket) when it starts before the
    bucket ends and has not ended before it starts. Buckets without active
    connections of a direction report null for that direction.
    """
    conns = list(conns)
    if not conns:
        return {"bucket_seconds": bucket, "series": [], "average_incoming": None,
                "average_outgoing": None, "mean_flagged_outgoing": None}

    origin = min(c.start_ts for c in conns)
    horizon = max(c.end_ts for c in conns)
    n_buckets = max(1, int(np.ceil((horizon - origin) / bucket)))
    series = []
    for i in range(n_buckets):
        t = origin + i * bucket
        active = [c for c in conns if c.start_ts < t + bucket and c.end_ts >= t]
        row: dict = {"t": round(t, 6)}
        for direction in Direction:
            group = [c for c in active if c.direction is direction]
            hits = sum(1 for c in group if c.remote_ip in flagged)
            row[f"{direction.value}_active"] = len(group)
            row[f"{direction.value}_flagged"] = hits
            row[f"{direction.value}_fraction"] = hits / len(group) if group else None
        series.append(row)

    return {
        "bucket_seconds": bucket,
        "series": series,
        "average_incoming": _mean([r["incoming_fraction"] for r in series]),
        "average_outgoing": _mean([r["outgoing_fraction"] for r in series]),
        "mean_flagged_outgoing": float(np.mean([r["outgoing_flagged"] for r in series])),
    }


def banlist_what_if(conns: Iterable[Connection], flagged: set[str], banlist: BanList,
                    bucket: float = DEFAULT_BUCKET_SECONDS) -> dict:
    """Timeline averages with every connection to a ban-listed remote removed."""
    kept = [c for c in conns if not banlist.covers(c.remote_ip)]
    timeline = exposure_timeline(kept, flagged, bucket)
    return {
        "connections_removed": sum(1 for c in conns if banlist.covers(c.remote_ip)),
        "average_incoming": timeline["average_incoming"],
        "average_outgoing": timeline["average_outgoing"],
    }


def peer_list_exposure(peer_lists: Iterable[PeerList], flagged: set[str], full_size: int = PEER_LIST_MAX) -> dict:
    """Fraction of flagged entries in each full list, with mean and minimum."""
    full = sorted(
        (p for p in peer_lists if len(p.entries) == full_size),
        key=lambda p: (p.ts, ip_sort_key(p.source_ip)),
    )
    rows = [
        {"source_ip": p.source_ip, "ts": p.ts,
         "fraction": sum(1 for e in p.entries if e.ip in flagged) / full_size}
        for p in full
    ]
    fractions = [r["fraction"] for r in rows]
    return {
        "full_lists": len(rows),
        "mean": float(np.mean(fractions)) if fractions else None,
        "min": min(fractions) if fractions else None,
        "every_list_contaminated": bool(fractions) and min(fractions) > 0,
        "lists": rows,
    }


def banlist_promotion_share(peer_lists: Iterable[PeerList], banlist: BanList,
                            full_size: int = PEER_LIST_MAX) -> Optional[float]:
    """Share of full lists that promote at least one ban-listed address."""
    full = [p for p in peer_lists if len(p.entries) == full_size]
    if not full:
        return None
    return sum(1 for p in full if any(banlist.covers(e.ip) for e in p.entries)) / len(full)


def emit_banlist(profiles: Iterable[PeerProfile], saturated: Iterable[str]) -> BanList:
    """Flagged IPv4 peers plus saturated /24 subnets, normalized."""
    ips = [p.ip for p in profiles if p.flagged and is_ipv4(p.ip)]
    return from_entries(ips, saturated)


def category_counts(profiles: Iterable[PeerProfile]) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for p in profiles:
        for c in p.categories:
            counts[c.value] += 1
    return {c.value: counts.get(c.value, 0) for c in AnomalyCategory}
