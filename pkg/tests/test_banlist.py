import pytest

from peer_sentinel.formats import banlist
from peer_sentinel.formats.banlist import BanList
from peer_sentinel.utils.exceptions import BanListParseError, InputNotFoundError


def test_community_list_expands_to_1941():
    ips = [f"31.{i // 200}.{i % 200}.9" for i in range(417)]
    subnets = [f"45.0.{i}.0/24" for i in range(6)]
    parsed = banlist.parse("\n".join(["# community list"] + ips + subnets) + "\n")
    assert len(parsed) == 423
    assert len(parsed.expand()) == 1941


def test_subnet_expansion_excludes_network_and_broadcast():
    hosts = BanList(subnets={"10.0.0.0/24"}).expand()
    assert len(hosts) == 254
    assert "10.0.0.0" not in hosts and "10.0.0.255" not in hosts


def test_diff_subnet_against_single():
    diff = banlist.expand_and_diff(BanList(subnets={"10.0.0.0/24"}), BanList(ips={"10.0.0.5"}))
    assert len(diff["only_a"]) == 253
    assert diff["both"] == ["10.0.0.5"]
    assert diff["only_b"] == []
    assert (diff["expanded_a"], diff["expanded_b"]) == (254, 1)


def test_identical_lists_diff_empty():
    a = banlist.parse("10.0.0.1\n10.0.1.0/24\n")
    diff = banlist.expand_and_diff(a, banlist.parse("10.0.1.0/24\n10.0.0.1\n"))
    assert diff["only_a"] == diff["only_b"] == []


def test_parse_reports_line_number():
    with pytest.raises(BanListParseError) as exc:
        banlist.parse("10.0.0.1\n\n10.0.0.300\n")
    assert exc.value.line == 3
    assert exc.value.text == "10.0.0.300"


def test_parse_rejects_host_bits_in_subnet():
    with pytest.raises(BanListParseError):
        banlist.parse("10.0.0.1/24\n")


def test_comments_and_slash_32():
    parsed = banlist.parse("10.0.0.1  # seen twice\n10.0.0.2/32\n")
    assert parsed.ips == {"10.0.0.1", "10.0.0.2"}


def test_normalize_drops_covered_ips():
    normalized = BanList(ips={"10.0.0.5", "10.0.1.5"}, subnets={"10.0.0.0/24"}).normalize()
    assert normalized.ips == {"10.0.1.5"}


def test_render_order():
    b = BanList(ips={"10.0.0.10", "9.0.0.1", "10.0.0.9"}, subnets={"20.0.0.0/24", "3.0.0.0/24"})
    assert b.render() == "3.0.0.0/24\n20.0.0.0/24\n9.0.0.1\n10.0.0.9\n10.0.0.10\n"


def test_covers():
    b = BanList(ips={"10.0.0.1"}, subnets={"10.0.1.0/24"})
    assert b.covers("10.0.0.1") and b.covers("10.0.1.77")
    assert not b.covers("10.0.2.1")
    assert not b.covers("abc.onion")


def test_write_then_load(tmp_path):
    b = BanList(ips={"10.0.0.1"}, subnets={"10.0.1.0/24"})
    path = tmp_path / "ban.txt"
    banlist.write(path, b)
    assert banlist.load(path) == b


def test_load_missing(tmp_path):
    with pytest.raises(InputNotFoundError):
        banlist.load(tmp_path / "missing.txt")
