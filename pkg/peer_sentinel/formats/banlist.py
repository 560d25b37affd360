"""
Ban-list text format.

One entry per line, either a dotted-quad address or a `/24` network such as
`203.0.113.0/24`; `#` starts a comment. A /24 expands to its 254 host
addresses (`.0` and `.255` excluded), which is also the convention the
community list uses when quoting its total size.
"""
import ipaddress
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

from ..utils.exceptions import BanListParseError
from ..utils.helpers import sorted_ips, validate_file_exists


@lru_cache(maxsize=32)
def _networks(subnets: frozenset[str]) -> tuple[ipaddress.IPv4Network, ...]:
    return tuple(ipaddress.IPv4Network(s) for s in subnets)


@dataclass
class BanList:
    ips: set[str] = field(default_factory=set)
    subnets: set[str] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.ips) + len(self.subnets)

    def normalize(self) -> "BanList":
        """Drop single addresses already covered by a listed subnet."""
        networks = [ipaddress.IPv4Network(s) for s in self.subnets]
        kept = {
            ip for ip in self.ips
            if not any(ipaddress.IPv4Address(ip) in net for net in networks)
        }
        return BanList(ips=kept, subnets=set(self.subnets))

    def covers(self, ip: str) -> bool:
        if ip in self.ips:
            return True
        try:
            addr = ipaddress.IPv4Address(ip)
        except ValueError:
            return False
        return any(addr in net for net in _networks(frozenset(self.subnets)))

    def expand(self) -> set[str]:
        """All addresses the list refuses: single ips plus the hosts of every subnet."""
        out = set(self.ips)
        for s in self.subnets:
            out.update(str(h) for h in ipaddress.IPv4Network(s).hosts())
        return out

    def render(self) -> str:
        """Deterministic text form: subnets first, then single ips, both in numeric order."""
        lines = sorted(self.subnets, key=lambda s: int(ipaddress.IPv4Network(s).network_address))
        lines += sorted_ips(self.ips)
        return "".join(f"{line}\n" for line in lines)


def parse(text: str) -> BanList:
    """
    Parse ban-list text.

    :param text str: Ban-list content
    :rtype BanList: Parsed (not yet normalized) list
    :raises BanListParseError: With the 1-based line number of the first bad entry
    """
    out = BanList()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if "/" in line:
                net = ipaddress.IPv4Network(line, strict=True)
                if net.prefixlen == 32:
                    out.ips.add(str(net.network_address))
                else:
                    out.subnets.add(str(net))
            else:
                out.ips.add(str(ipaddress.IPv4Address(line)))
        except ValueError:
            raise BanListParseError(lineno, line) from None
    return out


def load(path: str | Path) -> BanList:
    p = validate_file_exists(path)
    return parse(p.read_text(encoding="utf-8"))


def write(path: str | Path, banlist: BanList) -> None:
    Path(path).write_text(banlist.render(), encoding="utf-8", newline="\n")


def from_entries(ips: Iterable[str], subnets: Iterable[str]) -> BanList:
    return BanList(ips=set(ips), subnets=set(subnets)).normalize()


def expand_and_diff(a: BanList, b: BanList) -> dict:
    """Expand both lists to addresses and compare them."""
    ea, eb = a.expand(), b.expand()
    return {
        "expanded_a": len(ea),
        "expanded_b": len(eb),
        "only_a": sorted_ips(ea - eb),
        "only_b": sorted_ips(eb - ea),
        "both": sorted_ips(ea & eb),
    }
