"""
Offline ASN database: a CSV of `prefix,asn,org` rows with longest-prefix-match lookup.
"""
import csv
import ipaddress
import io
from pathlib import Path

from ..utils.exceptions import ReportError
from ..utils.helpers import parse_ipv4, validate_file_exists

UNKNOWN_ASN = 0
UNKNOWN_ORG = "unknown"


class AsnDatabase:
    """Prefix table bucketed by prefix length, probed from /32 down to /0."""

    def __init__(self, rows: list[tuple[str, int, str]] | None = None):
        self._tables: dict[int, dict[int, tuple[int, str]]] = {}
        self.size = 0
        for prefix, asn, org in rows or []:
            self.add(prefix, asn, org)

    def add(self, prefix: str, asn: int, org: str) -> None:
        net = ipaddress.IPv4Network(prefix, strict=False)
        self._tables.setdefault(net.prefixlen, {})[int(net.network_address)] = (int(asn), org)
        self.size += 1

    def lookup(self, ip: str) -> tuple[int, str]:
        """Return (asn, org); unmatched or non-IPv4 addresses map to ASN 0."""
        addr = parse_ipv4(ip)
        if addr is None:
            return UNKNOWN_ASN, UNKNOWN_ORG
        value = int(addr)
        for plen in sorted(self._tables, reverse=True):
            mask = (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF
            hit = self._tables[plen].get(value & mask)
            if hit is not None:
                return hit
        return UNKNOWN_ASN, UNKNOWN_ORG

    def asn(self, ip: str) -> int:
        return self.lookup(ip)[0]

    def __len__(self) -> int:
        return self.size


def parse(text: str) -> AsnDatabase:
    """
    Parse CSV text with a `prefix,asn,org` header.

    Raises:
        ReportError: On a missing header or an invalid row
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"prefix", "asn", "org"} <= set(reader.fieldnames):
        raise ReportError("ASN database needs a 'prefix,asn,org' header")
    db = AsnDatabase()
    for lineno, row in enumerate(reader, start=2):
        try:
            db.add(row["prefix"].strip(), int(row["asn"]), (row["org"] or "").strip())
        except (ValueError, AttributeError) as e:
            raise ReportError(f"ASN database line {lineno}: {e}") from e
    return db


def load(path: str | Path) -> AsnDatabase:
    p = validate_file_exists(path)
    return parse(p.read_text(encoding="utf-8"))
