"""
peer-sentinel CLI - Command Line Interface

Entry point wiring the analysis pipeline, the Levin decoder, ban-list tools
and the synthetic capture generator behind one argparse front end.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

try:
    from rich_argparse import RichHelpFormatter
    HelpFormatter = RichHelpFormatter
except ImportError:
    HelpFormatter = argparse.HelpFormatter
from rich.logging import RichHandler

from .. import __version__
from ..core.synth import PRESETS
from ..utils.exceptions import PeerSentinelError
from ..utils.helpers import PACKAGE_LOGGER
from .commands import EXIT_ERROR, cmd_analyze, cmd_banlist, cmd_config, cmd_decode, cmd_simulate
from .config import INPUT_FORMATS, AnalyzeOptions, BanlistOptions, DecodeOptions, SimulateOptions
from .ui import console, print_banner

logger = logging.getLogger("peer_sentinel.cli")

EPILOG = """
Examples:
  peer-sentinel simulate --scenario all-anomalies --out synth/
  peer-sentinel analyze --input synth/capture.jsonl --out-dir report/
  peer-sentinel analyze -i node-a.jsonl -i node-b.jsonl --local-ip 10.0.0.1 --local-ip 10.0.0.2
  peer-sentinel decode --input streams/ --out capture.jsonl
  peer-sentinel banlist diff report/banlist.txt community.txt
  peer-sentinel config --defaults

Exit codes:
  0  success, no findings
  2  analysis produced at least one finding
  1  error
"""


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Route all package logging through a single Rich handler on the root logger."""
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.INFO
    package = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(package.handlers):
        package.removeHandler(handler)
    package.setLevel(level)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


def create_argument_parser() -> argparse.ArgumentParser:
    """
    Create and configure the argument parser.

    Returns:
        Configured ArgumentParser instance
    """
    formatter = argparse.RawDescriptionHelpFormatter if HelpFormatter is argparse.HelpFormatter else HelpFormatter

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="errors only, no banner or progress")

    parser = argparse.ArgumentParser(
        prog="peer-sentinel",
        description="Find anomalous peers in Monero P2P (Levin) captures and derive ban lists.",
        formatter_class=formatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", "-V", action="version", version=f"peer-sentinel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("analyze", help="run the full pipeline", formatter_class=formatter, parents=[common])
    p.add_argument("--input", "-i", action="append", required=True, metavar="PATH",
                   help="capture file or stream directory; repeat for several vantage points")
    p.add_argument("--format", "-f", choices=INPUT_FORMATS, default="jsonl", help="input format (default: jsonl)")
    p.add_argument("--local-ip", action="append", metavar="IP",
                   help="measurement node address; one for all inputs or one per input (default: inferred)")
    p.add_argument("--config", "-c", metavar="FILE", help="detector configuration (JSON or key = value)")
    p.add_argument("--asn-db", metavar="CSV", help="prefix,asn,org table for AS attribution")
    p.add_argument("--banlist", metavar="FILE", help="reference ban list to compare against")
    p.add_argument("--out-dir", "-o", default="peer-sentinel-out", help="report directory")
    p.add_argument("--jobs", "-j", type=int, metavar="N", help="detector worker threads (default: cores)")

    p = sub.add_parser("decode", help="decode raw Levin streams to JSONL", formatter_class=formatter, parents=[common])
    p.add_argument("--input", "-i", required=True, metavar="PATH", help="stream file or directory of *.bin streams")
    p.add_argument("--out", "-o", required=True, metavar="FILE", help="JSONL output")

    p = sub.add_parser("banlist", help="emit or compare ban lists", formatter_class=formatter)
    bsub = p.add_subparsers(dest="banlist_action", required=True, metavar="ACTION")
    e = bsub.add_parser("emit", help="ban list from an analysis report", parents=[common])
    e.add_argument("--report", "-r", required=True, metavar="FILE", help="report.json from analyze")
    e.add_argument("--out", "-o", metavar="FILE", help="write here instead of stdout")
    d = bsub.add_parser("diff", help="expand two lists and compare them", parents=[common])
    d.add_argument("a", metavar="LIST_A")
    d.add_argument("b", metavar="LIST_B")
    d.add_argument("--out", "-o", metavar="FILE", help="also write the full comparison as JSON")

    p = sub.add_parser("simulate", help="generate a labelled synthetic capture", formatter_class=formatter,
                       parents=[common])
    p.add_argument("--scenario", "-s", default="all-anomalies",
                   help=f"scenario JSON file or preset: {', '.join(PRESETS)}")
    p.add_argument("--out", "-o", required=True, metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--raw", action="store_true", help="also write raw Levin streams with sidecars")

    p = sub.add_parser("config", help="show configuration", formatter_class=formatter, parents=[common])
    p.add_argument("--defaults", action="store_true", help="print embedded defaults with provenance comments")
    p.add_argument("--config", "-c", metavar="FILE", help="print the effective configuration of FILE")

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch, and return the exit code."""
    parser = create_argument_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    if args.verbose:
        logger.debug("Verbose mode enabled")

    if args.command in ("analyze", "simulate") and not args.quiet:
        print_banner()

    try:
        if args.command == "analyze":
            return cmd_analyze(AnalyzeOptions.from_namespace(args))
        if args.command == "decode":
            return cmd_decode(DecodeOptions.from_namespace(args))
        if args.command == "banlist":
            return cmd_banlist(BanlistOptions.from_namespace(args))
        if args.command == "simulate":
            return cmd_simulate(SimulateOptions.from_namespace(args))
        return cmd_config(args.defaults, args.config)
    except PeerSentinelError as e:
        logger.error(f"{args.command}: {type(e).__name__}: {e}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        console.print("\n[yellow]Cancelled.[/yellow]")
        return EXIT_ERROR


def main() -> None:
    """Run the command line version of peer-sentinel."""
    sys.exit(run())


if __name__ == "__main__":
    main()
