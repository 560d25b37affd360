"""
Peer Sentinel Exception Hierarchy

Defines custom exceptions for better error handling and debugging.
"""


class PeerSentinelError(Exception):
    """Base exception for all Peer Sentinel errors."""
    pass


# ============================================================================
# Codec Errors
# ============================================================================
class CodecError(PeerSentinelError):
    """Base exception for Levin frame and epee storage decoding errors."""
    pass


class MalformedSignature(CodecError):
    """Raised when a frame does not start with the Levin magic."""
    pass


class Incomplete(CodecError):
    """Raised when more octets are needed to finish a frame."""

    def __init__(self, needed: int):
        self.needed = needed
        super().__init__(f"incomplete frame: {needed} more octets needed")


class OversizedPayload(CodecError):
    """Raised when a frame announces a payload above the configured cap."""

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"payload of {size} octets exceeds cap of {limit}")


class InvalidFlags(CodecError):
    """Raised when a base-command frame does not carry exactly one of the request/response bits."""
    pass


class MalformedStorage(CodecError):
    """Raised when an epee storage blob has a bad signature or a truncated entry."""
    pass


class DepthExceeded(MalformedStorage):
    """Raised when nested sections exceed the configured depth."""
    pass


class UnknownCommand(CodecError):
    """Raised when a command code is outside the known command set."""

    def __init__(self, command: int):
        self.command = command
        super().__init__(f"unknown command code {command}")


class UnsupportedValue(CodecError):
    """Raised when a value cannot be represented in epee storage."""
    pass


# ============================================================================
# Ingest Errors
# ============================================================================
class IngestError(PeerSentinelError):
    """Base exception for capture ingestion errors."""
    pass


class InputNotFoundError(IngestError):
    """Raised when an input file is missing."""
    pass


class SchemaViolation(IngestError):
    """Raised when too many lines of a record file are malformed."""
    pass


# ============================================================================
# Analysis Errors
# ============================================================================
class AnalysisError(PeerSentinelError):
    """Base exception for analysis errors."""
    pass


class AmbiguousLocalIp(AnalysisError):
    """Raised when the measurement node address cannot be inferred."""
    pass


class InsufficientData(AnalysisError):
    """Raised when a statistic needs more samples than available."""
    pass


class NotAssessable(AnalysisError):
    """Raised when an input does not meet a detector's preconditions."""
    pass


class BothEmpty(AnalysisError):
    """Raised when a similarity is requested for two empty sets."""
    pass


class EmptyGraph(AnalysisError):
    """Raised when graph statistics are requested on an empty graph."""
    pass


# ============================================================================
# Report Errors
# ============================================================================
class ReportError(PeerSentinelError):
    """Base exception for report and ban-list errors."""
    pass


class BanListParseError(ReportError):
    """Raised when a ban-list line cannot be parsed."""

    def __init__(self, line: int, text: str):
        self.line = line
        self.text = text
        super().__init__(f"line {line}: cannot parse ban-list entry {text!r}")


class DbMissing(ReportError):
    """Raised when an ASN lookup is requested without a database."""
    pass


# ============================================================================
# Generator and Configuration Errors
# ============================================================================
class InvalidScenario(PeerSentinelError):
    """Raised when a synthetic scenario is inconsistent."""
    pass


class ConfigError(PeerSentinelError):
    """Raised when a configuration file or value is invalid."""
    pass
