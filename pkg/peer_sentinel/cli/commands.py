"""
Command execution for the peer-sentinel CLI.

Each `cmd_*` function takes a typed options object and returns the process
exit code: 0 on success, 2 when `analyze` produced findings. Library errors
propagate to main(), which maps them to 1.
"""

import json
import sys
from collections import Counter
from pathlib import Path

from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn

from .config import AnalyzeOptions, BanlistOptions, DecodeOptions, SimulateOptions
from .ui import console, print_analysis_summary, print_diff_table
from ..core import synth
from ..core.ingest import IngestStats, read_raw_streams, record_sort_key, raw_stream_files
from ..core.pipeline import analyze, write_outputs
from ..formats import asn, banlist
from ..formats.jsonl import write_jsonl
from ..utils.exceptions import InvalidScenario, ReportError
from ..utils.helpers import setup_logger, validate_file_exists
from ..utils.settings import load_config, render_defaults

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2


def cmd_analyze(opts: AnalyzeOptions) -> int:
    inputs = opts.analysis_inputs()
    config = load_config(opts.config)
    asn_db = asn.load(opts.asn_db) if opts.asn_db else None
    reference = banlist.load(opts.banlist) if opts.banlist else None
    if asn_db is not None:
        logger.info(f"loaded {len(asn_db)} ASN prefixes from {opts.asn_db}")

    with console.status("[bold cyan]Analyzing capture...[/bold cyan]", spinner="dots"):
        result = analyze(inputs, config, asn_db, reference, jobs=opts.jobs, progress=opts.progress)
    paths = write_outputs(result, opts.out_dir)
    print_analysis_summary(result, paths)
    return EXIT_FINDINGS if result.has_findings else EXIT_OK


def cmd_decode(opts: DecodeOptions) -> int:
    """Decode raw Levin streams into a normalized JSONL capture."""
    stats = IngestStats()
    files = raw_stream_files(opts.input)
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Decoding streams...", total=len(files))
        records = []
        for f in files:
            records += read_raw_streams(f, stats)
            progress.advance(task)
    records.sort(key=record_sort_key)
    written = write_jsonl(opts.out, records)

    payload_errors = sum(1 for r in records if r.decode_error)
    unknown = sum(1 for r in records if not r.fields and not r.decode_error)
    console.print(f"[green]✓ {written} records[/green] from {len(files)} streams written to {opts.out}")
    if stats.decode_errors:
        by_kind = Counter(e.kind for e in stats.decode_errors)
        console.print(f"[yellow]⚠ {len(stats.decode_errors)} streams stopped at a frame error:[/yellow]")
        for kind, n in sorted(by_kind.items()):
            console.print(f"  {kind}: {n}")
    if payload_errors:
        console.print(f"[yellow]⚠ {payload_errors} payloads failed to decode[/yellow]")
    if unknown:
        logger.info(f"{unknown} records carry no decodable fields (unknown command or empty payload)")
    return EXIT_OK


def _report_entries(report_path: str) -> tuple[list[str], list[str]]:
    path = validate_file_exists(report_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        ips = [p["ip"] for p in doc["profiles"] if p["flagged"]]
        subnets = [r["subnet"] for r in doc["saturation"]["saturated"]]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ReportError(f"{report_path} is not a peer-sentinel report: {e}") from e
    return ips, subnets


def cmd_banlist(opts: BanlistOptions) -> int:
    if opts.action == "emit":
        ips, subnets = _report_entries(opts.report)
        result = banlist.from_entries(ips, subnets)
        if opts.out:
            banlist.write(opts.out, result)
            console.print(f"[green]✓ {len(result.ips)} ips and {len(result.subnets)} subnets[/green] -> {opts.out}")
        else:
            sys.stdout.write(result.render())
        return EXIT_OK

    a_path, b_path = opts.paths
    diff = banlist.expand_and_diff(banlist.load(a_path).normalize(), banlist.load(b_path).normalize())
    print_diff_table(Path(a_path).name, Path(b_path).name, diff)
    if opts.out:
        Path(opts.out).write_text(json.dumps(diff, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _resolve_scenario(opts: SimulateOptions) -> synth.Scenario:
    if Path(opts.scenario).is_file():
        scenario = synth.load_scenario(opts.scenario)
        if opts.seed is not None:
            scenario.seed = opts.seed
        return scenario.validate()
    if opts.scenario in synth.PRESETS:
        return synth.preset(opts.scenario, seed=opts.seed or 0)
    raise InvalidScenario(
        f"{opts.scenario!r} is neither a scenario file nor a preset ({', '.join(synth.PRESETS)})"
    )


def cmd_simulate(opts: SimulateOptions) -> int:
    scenario = _resolve_scenario(opts)
    capture = synth.generate(scenario)
    capture_path, labels_path = synth.write_capture(opts.out, capture)
    (Path(opts.out) / "scenario.json").write_text(
        json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    console.print(
        f"[green]✓ {len(capture.records)} records[/green] over {len(capture.connections)} connections -> {capture_path}"
    )
    console.print(f"  {len(capture.labels)} labelled ips -> {labels_path}")
    if opts.raw:
        paths = synth.write_raw(Path(opts.out) / "streams", synth.generate_raw(scenario))
        console.print(f"  {len(paths)} raw streams -> {Path(opts.out) / 'streams'}")
    return EXIT_OK


def cmd_config(defaults: bool, config_path: str | None) -> int:
    if defaults or not config_path:
        sys.stdout.write(render_defaults())
        return EXIT_OK
    effective = load_config(config_path).to_flat_dict()
    sys.stdout.write(json.dumps(effective, indent=2, sort_keys=True) + "\n")
    return EXIT_OK
