"""
Typed option objects for the peer-sentinel CLI.

Each subcommand turns its argparse Namespace into one of these dataclasses
so command code never reaches into the Namespace directly.
"""

from argparse import Namespace
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..core.pipeline import AnalysisInput
from ..utils.exceptions import ConfigError

INPUT_FORMATS = ("jsonl", "raw-stream")


@dataclass
class AnalyzeOptions:
    """Options for `peer-sentinel analyze`."""

    inputs: list[str] = field(default_factory=list)
    fmt: str = "jsonl"
    local_ips: list[str] = field(default_factory=list)
    config: Optional[str] = None
    asn_db: Optional[str] = None
    banlist: Optional[str] = None
    out_dir: str = "peer-sentinel-out"
    jobs: Optional[int] = None
    progress: bool = True

    def __post_init__(self):
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {self.jobs}")

    @classmethod
    def from_namespace(cls, args: Namespace) -> "AnalyzeOptions":
        """Create AnalyzeOptions from argparse Namespace."""
        return cls(
            inputs=getattr(args, 'input', None) or [],
            fmt=getattr(args, 'format', "jsonl"),
            local_ips=getattr(args, 'local_ip', None) or [],
            config=getattr(args, 'config', None),
            asn_db=getattr(args, 'asn_db', None),
            banlist=getattr(args, 'banlist', None),
            out_dir=getattr(args, 'out_dir', "peer-sentinel-out"),
            jobs=getattr(args, 'jobs', None),
            progress=not getattr(args, 'quiet', False),
        )

    def analysis_inputs(self) -> list[AnalysisInput]:
        """
        Pair inputs with local ips.

        One --local-ip applies to every input; otherwise there must be one per input.
        """
        if not self.inputs:
            raise ConfigError("at least one --input is required")
        if len(self.local_ips) > 1 and len(self.local_ips) != len(self.inputs):
            raise ConfigError(
                f"{len(self.local_ips)} --local-ip values for {len(self.inputs)} inputs; give one or one per input"
            )
        if len(self.local_ips) == 1:
            ips: list[Optional[str]] = self.local_ips * len(self.inputs)
        elif self.local_ips:
            ips = list(self.local_ips)
        else:
            ips = [None] * len(self.inputs)
        return [AnalysisInput(Path(p), self.fmt, ip) for p, ip in zip(self.inputs, ips)]


@dataclass
class DecodeOptions:
    input: str = ""
    out: str = "capture.jsonl"

    @classmethod
    def from_namespace(cls, args: Namespace) -> "DecodeOptions":
        return cls(input=args.input, out=args.out)


@dataclass
class BanlistOptions:
    action: str = "emit"
    report: Optional[str] = None
    out: Optional[str] = None
    paths: list[str] = field(default_factory=list)

    @classmethod
    def from_namespace(cls, args: Namespace) -> "BanlistOptions":
        return cls(
            action=args.banlist_action,
            report=getattr(args, 'report', None),
            out=getattr(args, 'out', None),
            paths=[p for p in (getattr(args, 'a', None), getattr(args, 'b', None)) if p],
        )


@dataclass
class SimulateOptions:
    scenario: str = "all-anomalies"
    out: str = "synthetic"
    seed: Optional[int] = None
    raw: bool = False

    @classmethod
    def from_namespace(cls, args: Namespace) -> "SimulateOptions":
        return cls(
            scenario=args.scenario,
            out=args.out,
            seed=getattr(args, 'seed', None),
            raw=getattr(args, 'raw', False),
        )
