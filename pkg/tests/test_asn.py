import pytest

from peer_sentinel.formats import asn
from peer_sentinel.utils.exceptions import ReportError

CSV = "prefix,asn,org\n10.0.0.0/8,64500,Wide\n10.1.0.0/16,64501,Narrow\n10.1.2.0/24,64502,Narrowest\n"


@pytest.mark.parametrize("ip, expected", [
    ("10.9.9.9", (64500, "Wide")),
    ("10.1.9.9", (64501, "Narrow")),
    ("10.1.2.3", (64502, "Narrowest")),
    ("192.0.2.1", (0, "unknown")),
    ("abc.onion", (0, "unknown")),
])
def test_longest_prefix_match(ip, expected):
    assert asn.parse(CSV).lookup(ip) == expected


def test_size():
    assert len(asn.parse(CSV)) == 3


def test_missing_header():
    with pytest.raises(ReportError):
        asn.parse("10.0.0.0/8,64500,Wide\n")


def test_bad_row():
    with pytest.raises(ReportError, match="line 3"):
        asn.parse("prefix,asn,org\n10.0.0.0/8,64500,Wide\n10.0.0.0/8,many,Wide\n")


def test_load(tmp_path):
    path = tmp_path / "asn.csv"
    path.write_text(CSV, encoding="utf-8")
    assert asn.load(path).asn("10.1.2.200") == 64502
