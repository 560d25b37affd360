"""
UI components for the peer-sentinel CLI.

Rich-based banner, tables and panels. Everything here only renders; the
numbers come from the pipeline.
"""

from typing import Any, Optional

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .. import __version__
from ..core.pipeline import AnalysisResult
from ..utils.helpers import format_duration

console = Console()


def print_banner() -> None:
    title = Text("peer-sentinel", style="bold magenta")
    subtitle = Text(f"v{__version__} - Levin capture anomaly analysis", style="italic white")
    console.print(Panel(
        Text.assemble(title, "\n", subtitle),
        box=box.ROUNDED,
        border_style="cyan",
        expand=False,
        padding=(1, 2),
    ))
    console.print()


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}%"


def print_category_table(counts: dict[str, int]) -> None:
    """Number of flagged ips per category."""
    table = Table(title="Findings per category", box=box.SIMPLE)
    table.add_column("Category", style="cyan", no_wrap=True)
    table.add_column("IPs", style="magenta", justify="right")
    for name, n in counts.items():
        table.add_row(name, str(n) if n else "[dim]0[/dim]")
    console.print(table)


def print_analysis_summary(result: AnalysisResult, paths: dict[str, Any]) -> None:
    """
    Print the run summary: category counts, exposure figures and output files.

    Args:
        result: Completed analysis
        paths: Output files keyed by kind, as returned by write_outputs
    """
    print_category_table(result.exposure["category_counts"])

    timeline = result.exposure["timeline"]
    lists = result.exposure["peer_lists"]
    table = Table(title="Exposure", box=box.ROUNDED, show_header=False, padding=(0, 1))
    table.add_column("Metric", style="bold cyan", width=34)
    table.add_column("Value", style="bold white")
    table.add_row("Connections kept / dropped", f"{len(result.connections)} / {result.dropped_connections}")
    if result.connections:
        span = max(c.end_ts for c in result.connections) - min(c.start_ts for c in result.connections)
        table.add_row("Capture span", format_duration(span))
    table.add_row("Flagged share of connected peers", _pct(result.exposure["flagged_fraction"]))
    table.add_row("Average flagged incoming", _pct(timeline["average_incoming"]))
    table.add_row("Average flagged outgoing", _pct(timeline["average_outgoing"]))
    table.add_row("Mean flagged share of full lists", _pct(lists["mean"]))
    table.add_row("Ban list", f"{len(result.banlist.ips)} ips, {len(result.banlist.subnets)} /24 subnets")
    what_if = result.exposure.get("banlist_what_if")
    if what_if:
        table.add_row(
            "With reference ban list applied",
            f"in {_pct(what_if['average_incoming'])}, out {_pct(what_if['average_outgoing'])}",
        )
    console.print()
    console.print(table)

    for name, reason in sorted(result.not_assessable.items()):
        console.print(f"[yellow]⚠ {name} not assessable:[/yellow] {reason}")

    style = "yellow" if result.has_findings else "green"
    lines = [(f"{len(result.findings)} findings\n", f"bold {style}")]
    lines += [(f"{kind}: {path}\n", "white") for kind, path in paths.items()]
    console.print()
    console.print(Panel(Text.assemble(*lines), title="Session Summary", border_style=style, box=box.ROUNDED))


def print_diff_table(name_a: str, name_b: str, diff: dict) -> None:
    table = Table(title="Ban-list comparison", box=box.SIMPLE)
    table.add_column("Set", style="cyan")
    table.add_column("Addresses", style="magenta", justify="right")
    table.add_row(f"expanded {name_a}", str(diff["expanded_a"]))
    table.add_row(f"expanded {name_b}", str(diff["expanded_b"]))
    table.add_row(f"only in {name_a}", str(len(diff["only_a"])))
    table.add_row(f"only in {name_b}", str(len(diff["only_b"])))
    table.add_row("in both", str(len(diff["both"])))
    console.print(table)
