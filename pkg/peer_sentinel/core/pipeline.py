"""
End-to-end analysis: ingest one or more captures, model connections, run
every detector and assemble the report documents.
"""
import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional

from .. import __version__
from ..formats import banlist as banlist_format
from ..formats.asn import AsnDatabase
from ..formats.banlist import BanList, expand_and_diff
from ..utils.config import (
    BANLIST_FILE,
    FINDINGS_FILE,
    REPORT_FILE,
    REPORT_SCHEMA_VERSION,
    SUMMARY_FILE,
    AnalysisConfig,
)
from ..utils.exceptions import ConfigError, EmptyGraph, NotAssessable
from ..utils.helpers import ensure_directory_exists, ip_sort_key, setup_logger
from ..utils.settings import config_hash
from . import detectors, exposure, identity, structure
from .connections import filter_incomplete, group_connections, infer_local_ip, timed_sync_baseline
from .ingest import IngestStats, extract_peer_lists, read_capture
from .types import AnomalyFinding, Connection, IdCluster, OverlapMatrix, PeerList, PeerProfile

logger = setup_logger(__name__)


@dataclass
class AnalysisInput:
    path: Path
    fmt: str = "jsonl"
    local_ip: Optional[str] = None


@dataclass
class RunMeta:
    """Provenance embedded in every report."""
    version: str
    config_hash: str
    inputs: list[dict[str, Any]]
    local_ips: list[str]
    started_at: str
    finished_at: str = ""
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "local_ip": self.local_ips[0] if len(self.local_ips) == 1 else self.local_ips,
            "timestamps": {"started": self.started_at, "finished": self.finished_at},
            "schema_version": self.schema_version,
        }


@dataclass
class AnalysisResult:
    config: AnalysisConfig
    meta: RunMeta
    connections: list[Connection]
    dropped_connections: int
    peer_lists: list[PeerList]
    findings: list[AnomalyFinding]
    profiles: list[PeerProfile]
    overlap: OverlapMatrix
    exposure: dict[str, Any]
    promotion_stats: Optional[dict[str, Any]]
    saturation: dict[str, Any]
    identity: dict[str, Any]
    banlist: BanList
    ingest: IngestStats
    not_assessable: dict[str, str] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def has_findings(self) -> bool:
        return bool(self.findings)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _decode_error_counts(conns: list[Connection], stats: IngestStats, local_ips: set[str]) -> dict[str, int]:
    """Per remote ip: messages whose payload failed to decode plus streams cut short by a frame error."""
    counts: Counter = Counter()
    for c in conns:
        if c.decode_errors:
            counts[c.remote_ip] += c.decode_errors
    for report in stats.decode_errors:
        remote = report.dst_ip if report.src_ip in local_ips else report.src_ip
        counts[remote] += 1
    return {ip: counts[ip] for ip in sorted(counts, key=ip_sort_key)}


def _run_detectors(
    conns: list[Connection],
    lists: list[PeerList],
    config: AnalysisConfig,
    jobs: int,
    progress: bool,
) -> tuple[list[AnomalyFinding], dict[str, str]]:
    cfg = config.detectors
    tasks: dict[str, Callable[[], list[AnomalyFinding]]] = {
        "support_flags_omission": lambda: detectors.detect_support_flags_omission(conns),
        "deprecated_last_seen": lambda: detectors.detect_deprecated_last_seen(lists),
        "signature_only_fragments": lambda: detectors.detect_signature_only_fragments(conns, cfg),
        "low_diversity": lambda: detectors.detect_low_diversity(lists, cfg),
        "similar_lists": lambda: detectors.detect_similar_lists(lists, cfg, progress),
        "short_lived": lambda: detectors.detect_short_lived(conns, cfg),
        "throttled_timed_sync": lambda: detectors.detect_throttled_timed_sync(conns, cfg),
        "ping_flooding": lambda: detectors.detect_ping_flooding(conns, cfg),
        "sequence_violations": lambda: detectors.detect_sequence_violations(conns, cfg),
    }
    findings: list[AnomalyFinding] = []
    skipped: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {name: pool.submit(task) for name, task in tasks.items()}
        for name, future in futures.items():
            try:
                result = future.result()
            except NotAssessable as e:
                logger.warning(f"{name}: not assessable ({e})")
                skipped[name] = str(e)
                continue
            logger.debug(f"{name}: {len(result)} findings")
            findings.extend(result)
    return findings, skipped


def analyze(
    inputs: list[AnalysisInput],
    config: AnalysisConfig | None = None,
    asn_db: AsnDatabase | None = None,
    banlist: BanList | None = None,
    jobs: int | None = None,
    progress: bool = False,
) -> AnalysisResult:
    """
    Run the full pipeline over one capture per vantage point.

    Connections from all inputs are pooled; connection ids carry a per-input
    prefix when there is more than one input.

    Raises:
        InputNotFoundError: An input path does not exist
        SchemaViolation: An input is mostly malformed
        AmbiguousLocalIp: The local ip of an input cannot be inferred
        ConfigError: jobs is below 1
    """
    config = (config or AnalysisConfig()).validate()
    if jobs is not None and jobs < 1:
        raise ConfigError(f"jobs must be at least 1, got {jobs}")
    jobs = jobs or os.cpu_count() or 1
    started = _now()
    stats = IngestStats()

    conns: list[Connection] = []
    lists: list[PeerList] = []
    local_ips: list[str] = []
    for i, inp in enumerate(inputs):
        records = read_capture(inp.path, inp.fmt, stats, config.max_payload, config.max_depth)
        if not records:
            logger.warning(f"{inp.path}: no records")
            continue
        local_ip = inp.local_ip or infer_local_ip(records)
        local_ips.append(local_ip)
        source = f"in{i}" if len(inputs) > 1 else ""
        conns.extend(group_connections(records, local_ip, config.session_gap, source))
        lists.extend(extract_peer_lists(records, stats))
        logger.info(f"{inp.path}: {len(records)} records, local ip {local_ip}")

    local_set = set(local_ips)
    lists = [p for p in lists if p.source_ip not in local_set]
    kept, dropped = filter_incomplete(conns)

    findings, not_assessable = _run_detectors(kept, lists, config, jobs, progress)

    # identity
    observations = identity.collect_observations(kept, lists, local_set)
    usable = identity.trusted(observations, config.trust_list_ids)
    clusters: list[IdCluster] = identity.build_id_clusters(usable, asn_db)
    findings += identity.detect_temporal_id_anomaly(usable)
    findings += identity.cluster_findings(clusters, usable)
    try:
        multiplicity = identity.id_multiplicity_stats(usable)
    except NotAssessable as e:
        not_assessable["id_multiplicity"] = str(e)
        multiplicity = None

    # structure
    graph = structure.build_promotion_graph(lists)
    promoted = graph.promoted() - local_set
    connected = {c.remote_ip for c in kept}
    rows = structure.subnet_saturation(connected | promoted, connected, asn_db)
    findings += structure.saturation_findings(rows, config.saturation_threshold)
    saturated = structure.saturated_subnets(rows, config.saturation_threshold)
    try:
        promotion_stats = structure.in_degree_stats(graph, config.top_k)
    except EmptyGraph as e:
        not_assessable["promotion_graph"] = str(e)
        promotion_stats = None

    findings = detectors.merge_findings(findings)
    profiles = exposure.build_profiles(findings, kept, usable, asn_db, promoted)
    flagged = exposure.flagged_set(profiles)
    ours = exposure.emit_banlist(profiles, saturated)
    cfg = config.detectors

    exposure_doc: dict[str, Any] = {
        "flagged_fraction": exposure.flagged_fraction(profiles),
        "category_counts": exposure.category_counts(profiles),
        "timeline": exposure.exposure_timeline(kept, flagged, config.bucket_seconds),
        "peer_lists": exposure.peer_list_exposure(lists, flagged, cfg.full_list_size),
    }
    extras: dict[str, Any] = {
        "syntax_violations": detectors.collect_syntax_violations(kept),
        "decode_errors": _decode_error_counts(kept, stats, local_set),
        "short_lived": {
            "without_handshake": detectors.short_lived_without_handshake(kept, cfg),
            "top": detectors.short_lived_top(kept, cfg, config.top_k),
        },
        "timed_sync_baseline": timed_sync_baseline(kept, cfg.throttle_min_duration),
    }
    if asn_db is not None:
        extras["asn_rollup"] = structure.category_asn_rollup(findings, asn_db)
    if banlist is not None:
        banlist = banlist.normalize()
        exposure_doc["banlist_what_if"] = exposure.banlist_what_if(kept, flagged, banlist, config.bucket_seconds)
        exposure_doc["banlist_promotion_share"] = exposure.banlist_promotion_share(lists, banlist, cfg.full_list_size)
        comparison = expand_and_diff(ours, banlist)
        extras["banlist_comparison"] = {
            "expanded_ours": comparison["expanded_a"],
            "expanded_reference": comparison["expanded_b"],
            "only_ours": len(comparison["only_a"]),
            "only_reference": len(comparison["only_b"]),
            "both": len(comparison["both"]),
        }

    meta = RunMeta(
        version=__version__,
        config_hash=config_hash(config),
        inputs=[{"path": str(inp.path), "format": inp.fmt} for inp in inputs],
        local_ips=local_ips,
        started_at=started,
        finished_at=_now(),
    )
    logger.info(f"{len(findings)} findings across {len(flagged)} ips from {len(kept)} connections")
    return AnalysisResult(
        config=config,
        meta=meta,
        connections=kept,
        dropped_connections=dropped,
        peer_lists=lists,
        findings=findings,
        profiles=profiles,
        overlap=exposure.overlap_matrix(profiles, banlist),
        exposure=exposure_doc,
        promotion_stats=promotion_stats,
        saturation={
            "threshold": config.saturation_threshold,
            "subnets": len(rows),
            "median": structure.saturation_median(rows),
            "saturated": [r for r in rows if r["count"] >= config.saturation_threshold],
            "top": rows[:config.top_k],
        },
        identity={
            "observations": len(observations),
            "trusted_observations": len(usable),
            "clusters": [c.to_dict() for c in clusters],
            "multiplicity": multiplicity,
        },
        banlist=ours,
        ingest=stats,
        not_assessable=not_assessable,
        extras=extras,
    )


# ============================================================================
# Report Documents
# ============================================================================
def build_report(result: AnalysisResult) -> dict[str, Any]:
    return {
        "run_meta": result.meta.to_dict(),
        "profiles": [p.to_dict() for p in result.profiles],
        "findings": [f.to_dict() for f in result.findings],
        "overlap": result.overlap.to_dict(),
        "exposure": result.exposure,
        "promotion_stats": result.promotion_stats,
        "saturation": result.saturation,
        "identity": result.identity,
        "connections": {
            "kept": len(result.connections),
            "dropped": result.dropped_connections,
            "peer_lists": len(result.peer_lists),
        },
        "ingest": result.ingest.to_dict(),
        "not_assessable": result.not_assessable,
        **result.extras,
    }


def build_findings(result: AnalysisResult) -> dict[str, Any]:
    """The run-independent part of the report: no timestamps, no paths."""
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_hash": result.meta.config_hash,
        "findings": [f.to_dict(with_times=False) for f in result.findings],
    }


def render_summary(result: AnalysisResult) -> str:
    counts = result.exposure["category_counts"]
    timeline = result.exposure["timeline"]
    lists = result.exposure["peer_lists"]

    def pct(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value * 100:.2f}%"

    lines = [
        f"peer-sentinel {result.meta.version}  config {result.meta.config_hash[:12]}",
        f"connections: {len(result.connections)} kept, {result.dropped_connections} dropped",
        f"peer lists: {len(result.peer_lists)} ({lists['full_lists']} full)",
        f"findings: {len(result.findings)}",
        "",
        "per category:",
    ]
    width = max(len(name) for name in counts)
    lines += [f"  {name:<{width}}  {n}" for name, n in counts.items()]
    rollup = result.extras.get("asn_rollup")
    if rollup:
        lines += ["", "per category ASes:"]
        lines += [
            f"  {name:<{width}}  {row['ips']} ips across {row['unique_asns']} unique ASs"
            for name, row in rollup.items()
        ]
    lines += [
        "",
        f"flagged share of connected peers: {pct(result.exposure['flagged_fraction'])}",
        f"average flagged incoming: {pct(timeline['average_incoming'])}",
        f"average flagged outgoing: {pct(timeline['average_outgoing'])}",
        f"mean flagged share of full peer lists: {pct(lists['mean'])}",
        f"ban list: {len(result.banlist.ips)} ips, {len(result.banlist.subnets)} subnets",
    ]
    if result.not_assessable:
        lines += ["", "not assessable:"]
        lines += [f"  {name}: {reason}" for name, reason in sorted(result.not_assessable.items())]
    return "\n".join(lines) + "\n"


def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def write_outputs(result: AnalysisResult, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, findings.json, banlist.txt and summary.txt."""
    out = ensure_directory_exists(out_dir)
    paths = {
        "report": out / REPORT_FILE,
        "findings": out / FINDINGS_FILE,
        "banlist": out / BANLIST_FILE,
        "summary": out / SUMMARY_FILE,
    }
    _dump(paths["report"], build_report(result))
    _dump(paths["findings"], build_findings(result))
    banlist_format.write(paths["banlist"], result.banlist)
    paths["summary"].write_text(render_summary(result), encoding="utf-8", newline="\n")
    return paths
