"""
Formats package for peer-sentinel.

Wire codecs (Levin frames, epee portable storage) and the file formats the
tool reads and writes (ban lists, ASN tables). The JSONL capture codec lives
in `formats.jsonl` and is imported on demand since it builds core records.
"""

from . import epee
from . import levin
from . import banlist
from . import asn

__all__ = ["epee", "levin", "banlist", "asn"]
