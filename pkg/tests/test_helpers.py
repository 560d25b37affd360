import pytest

from peer_sentinel.utils import helpers
from peer_sentinel.utils.exceptions import InputNotFoundError


def test_m_ip_is_little_endian():
    # 1.2.3.4 on the wire is the octets 01 02 03 04 read as a little-endian u32
    assert helpers.ip_to_uint32("1.2.3.4") == 0x04030201
    assert helpers.uint32_to_ip(0x04030201) == "1.2.3.4"


def test_subnet24():
    assert helpers.subnet24("203.0.113.77") == "203.0.113.0/24"
    assert helpers.subnet24("abc.onion") == "abc.onion"


def test_sorted_ips_numeric_then_opaque():
    assert helpers.sorted_ips(["10.0.0.10", "zz.onion", "9.0.0.1", "10.0.0.9"]) == [
        "9.0.0.1", "10.0.0.9", "10.0.0.10", "zz.onion",
    ]


@pytest.mark.parametrize("ip, valid", [
    ("31.0.0.1", True),
    ("0.0.0.0", False),
    ("127.0.0.1", False),
    ("224.0.0.1", False),
    ("255.255.255.255", False),
    ("::1", False),
])
def test_is_valid_unicast(ip, valid):
    assert helpers.is_valid_unicast(ip) is valid


@pytest.mark.parametrize("seconds, text", [(12.34, "12.3s"), (61, "1m 1s"), (3720, "1h 2m")])
def test_format_duration(seconds, text):
    assert helpers.format_duration(seconds) == text


def test_validate_file_exists(tmp_path):
    with pytest.raises(InputNotFoundError):
        helpers.validate_file_exists(tmp_path / "missing")
    with pytest.raises(InputNotFoundError):
        helpers.validate_file_exists(tmp_path)
