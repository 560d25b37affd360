__version__ = "1.0.0"

# Wire formats
from . import formats
from .formats import levin, epee, banlist, asn

# Pipeline
from .core.pipeline import AnalysisInput, AnalysisResult, analyze, build_report, write_outputs
from .core.synth import Scenario, generate, generate_raw

from .utils.config import AnalysisConfig, DetectorConfig
from .utils.exceptions import (
    PeerSentinelError,
    CodecError,
    IngestError,
    AnalysisError,
    ReportError,
)
