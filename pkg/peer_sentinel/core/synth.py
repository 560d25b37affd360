"""
Deterministic synthetic captures.

A Scenario lists peers and the behavior each one exhibits. Standard peers
follow the default message flow (handshake, one reachability Ping on
incoming connections, Timed Sync both ways every 60 s with jitter);
every other behavior injects exactly the pattern its detector looks for, so
the generator's labels are the ground truth for the detectors.
"""
import hashlib
import ipaddress
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from ..formats import epee
from ..formats.epee import Section, flatten, plain_fields
from ..formats.jsonl import write_jsonl
from ..formats.levin import Command, LevinFrame, MessageKind, encode_frame
from ..utils.config import INACTIVITY_DROP, PEER_LIST_MAX, SIGNATURE_FRAGMENT_SIZE, TIMED_SYNC_INTERVAL
from ..utils.exceptions import InvalidScenario
from ..utils.helpers import ensure_directory_exists, ip_to_uint32, parse_ipv4, setup_logger, sorted_ips, subnet24
from .ingest import StreamMeta, record_sort_key, sidecar_path
from .types import AnomalyCategory, Direction, PacketRecord, Sender

logger = setup_logger(__name__)

P2P_PORT = 18080
MAINNET_NETWORK_ID = bytes.fromhex("1230f171610441611731008216a1a110")
TOP_VERSION = 16
BASE_HEIGHT = 3_000_000
RESPONSE_DELAY = 0.05
MTU_SEGMENT = 1448
LAST_SEEN_PLACEHOLDER = 1_600_000_000
DEFAULT_START_TS = 1_700_000_000.0

THROTTLED_INTERVAL = 600.0
PING_BURST = 50
PING_BURST_GAP = 2.0
SHORT_LIVED_CONNECTIONS = 15
SATURATED_SIBLINGS = 120
SATURATED_LIST_SIZE = 150
LOW_DIVERSITY_SUBNETS = 7

CAPTURE_FILE = "capture.jsonl"
LABELS_FILE = "labels.txt"


class Behavior(str, Enum):
    STANDARD = "standard"
    SUPPORT_FLAGS_OMITTER = "support-flags-omitter"
    LAST_SEEN_SENDER = "last-seen-sender"
    SIG_ONLY_FRAGMENTER = "sig-only-fragmenter"
    LOW_DIVERSITY_PROMOTER = "low-diversity-promoter"
    LIST_CLONER = "list-cloner"
    SHORT_LIVED_FLOODER = "short-lived-flooder"
    THROTTLER = "throttler"
    PING_FLOODER = "ping-flooder"
    ID_FLIPPER = "id-flipper"
    ID_CLUSTER_MEMBER = "id-cluster-member"
    SATURATED_SUBNET = "saturated-subnet"

    @classmethod
    def from_string(cls, value: str) -> "Behavior":
        try:
            return cls(value.lower().replace("_", "-"))
        except ValueError:
            raise InvalidScenario(f"unknown behavior: {value}") from None


BEHAVIOR_CATEGORY: dict[Behavior, Optional[AnomalyCategory]] = {
    Behavior.STANDARD: None,
    Behavior.SUPPORT_FLAGS_OMITTER: AnomalyCategory.SUPPORT_FLAGS_OMISSION,
    Behavior.LAST_SEEN_SENDER: AnomalyCategory.DEPRECATED_LAST_SEEN,
    Behavior.SIG_ONLY_FRAGMENTER: AnomalyCategory.SIGNATURE_ONLY_FRAGMENT,
    Behavior.LOW_DIVERSITY_PROMOTER: AnomalyCategory.LOW_DIVERSITY_PEER_LIST,
    Behavior.LIST_CLONER: AnomalyCategory.HIGH_SIMILARITY_PEER_LIST,
    Behavior.SHORT_LIVED_FLOODER: AnomalyCategory.SHORT_LIVED_FLOODING,
    Behavior.THROTTLER: AnomalyCategory.THROTTLED_TIMED_SYNC,
    Behavior.PING_FLOODER: AnomalyCategory.PING_FLOODING,
    Behavior.ID_FLIPPER: AnomalyCategory.PEER_ID_TEMPORAL,
    Behavior.ID_CLUSTER_MEMBER: AnomalyCategory.PEER_ID_CLUSTER,
    Behavior.SATURATED_SUBNET: AnomalyCategory.SATURATED_SUBNET_MEMBER,
}

# shortest run in which each pattern is fully observable
MIN_DURATION: dict[Behavior, float] = {
    Behavior.THROTTLER: 60.0 + 2 * THROTTLED_INTERVAL,
    Behavior.PING_FLOODER: PING_BURST * PING_BURST_GAP + INACTIVITY_DROP,
    Behavior.SHORT_LIVED_FLOODER: SHORT_LIVED_CONNECTIONS * 6.0 + 2 * INACTIVITY_DROP,
    Behavior.ID_FLIPPER: 3 * 90.0,
    Behavior.ID_CLUSTER_MEMBER: 2 * 90.0,
}
DEFAULT_MIN_DURATION = 120.0


# ============================================================================
# Scenario
# ============================================================================
@dataclass
class PeerSpec:
    ip: str
    behavior: Behavior = Behavior.STANDARD
    direction: Optional[Direction] = None

    @property
    def resolved_direction(self) -> Direction:
        if self.direction is not None:
            return self.direction
        if self.behavior in (Behavior.PING_FLOODER, Behavior.SHORT_LIVED_FLOODER):
            return Direction.INCOMING
        return Direction.OUTGOING

    def to_dict(self) -> dict:
        d = {"ip": self.ip, "behavior": self.behavior.value}
        if self.direction is not None:
            d["direction"] = self.direction.value
        return d


@dataclass
class Scenario:
    seed: int = 0
    duration: float = 1500.0
    peers: list[PeerSpec] = field(default_factory=list)
    local_ip: str = "10.0.0.1"
    jitter: float = 2.0
    list_contamination: float = 0.0
    start_ts: float = DEFAULT_START_TS

    def validate(self) -> "Scenario":
        """
        Raises:
            InvalidScenario: On the first inconsistency found
        """
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidScenario("seed must be an unsigned 64-bit integer")
        if self.duration <= 0:
            raise InvalidScenario("duration must be positive")
        if not 0 <= self.jitter < 15:
            raise InvalidScenario("jitter must lie in [0, 15) seconds")
        if not 0 <= self.list_contamination <= 0.5:
            raise InvalidScenario("list_contamination must lie in [0, 0.5]")
        if parse_ipv4(self.local_ip) is None:
            raise InvalidScenario(f"local ip {self.local_ip!r} is not IPv4")

        seen: set[str] = set()
        for peer in self.peers:
            if parse_ipv4(peer.ip) is None:
                raise InvalidScenario(f"peer ip {peer.ip!r} is not IPv4")
            if peer.ip in seen or peer.ip == self.local_ip:
                raise InvalidScenario(f"peer ip {peer.ip} is used twice")
            seen.add(peer.ip)
            need = MIN_DURATION.get(peer.behavior, DEFAULT_MIN_DURATION)
            if self.duration < need:
                raise InvalidScenario(f"{peer.behavior.value} needs a duration of at least {need:.0f} s")
            if peer.behavior is Behavior.PING_FLOODER and peer.resolved_direction is not Direction.INCOMING:
                raise InvalidScenario("ping flooding is only observable on incoming connections")

        if self.list_contamination > 0 and not any(p.behavior is Behavior.SATURATED_SUBNET for p in self.peers):
            raise InvalidScenario("list_contamination needs a saturated-subnet peer to draw addresses from")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            peers = [
                PeerSpec(
                    ip=str(p["ip"]),
                    behavior=Behavior.from_string(str(p.get("behavior", "standard"))),
                    direction=Direction(p["direction"]) if p.get("direction") else None,
                )
                for p in d.get("peers", [])
            ]
            return cls(
                seed=int(d.get("seed", 0)),
                duration=float(d.get("duration", 1500.0)),
                peers=peers,
                local_ip=str(d.get("local_ip", "10.0.0.1")),
                jitter=float(d.get("jitter", 2.0)),
                list_contamination=float(d.get("list_contamination", 0.0)),
                start_ts=float(d.get("start_ts", DEFAULT_START_TS)),
            ).validate()
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidScenario(f"invalid scenario document: {e}") from e

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration": self.duration,
            "local_ip": self.local_ip,
            "jitter": self.jitter,
            "list_contamination": self.list_contamination,
            "start_ts": self.start_ts,
            "peers": [p.to_dict() for p in self.peers],
        }


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        return Scenario.from_dict(json.loads(p.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"{p}: {e}") from e


class SubnetAllocator:
    """Hands out unused /24 networks, walking upwards from a base address."""

    def __init__(self, reserved: set[str], base: str = "31.0.0.0"):
        self._next = int(ipaddress.IPv4Address(base))
        self._reserved = set(reserved)

    def subnet(self) -> ipaddress.IPv4Network:
        while True:
            net = ipaddress.IPv4Network((self._next, 24))
            self._next += 256
            if str(net) not in self._reserved:
                self._reserved.add(str(net))
                return net

    def host(self) -> str:
        return str(self.subnet().network_address + 1)


def preset(name: str, seed: int = 0) -> Scenario:
    """
    Built-in scenarios:

    - `standard`: ten standard peers
    - `all-anomalies`: one standard peer and one peer per anomalous behavior
    - `exposure`: eight standard and two throttling incoming peers
    - `contamination`: standard peers whose lists carry 17% saturated-subnet addresses
    """
    alloc = SubnetAllocator({subnet24("10.0.0.1")})
    if name == "standard":
        peers = [PeerSpec(alloc.host(), Behavior.STANDARD, Direction.INCOMING if i % 2 else None) for i in range(10)]
        return Scenario(seed=seed, peers=peers).validate()
    if name == "all-anomalies":
        peers = [PeerSpec(alloc.host(), b) for b in Behavior]
        return Scenario(seed=seed, peers=peers).validate()
    if name == "exposure":
        peers = [PeerSpec(alloc.host(), Behavior.STANDARD, Direction.INCOMING) for _ in range(8)]
        peers += [PeerSpec(alloc.host(), Behavior.THROTTLER, Direction.INCOMING) for _ in range(2)]
        return Scenario(seed=seed, peers=peers).validate()
    if name == "contamination":
        peers = [PeerSpec(alloc.host(), Behavior.STANDARD) for _ in range(8)]
        peers.append(PeerSpec(alloc.host(), Behavior.SATURATED_SUBNET))
        return Scenario(seed=seed, peers=peers, list_contamination=0.17).validate()
    raise InvalidScenario(f"unknown preset: {name}")


PRESETS = ("standard", "all-anomalies", "exposure", "contamination")


# ============================================================================
# Generated Traffic
# ============================================================================
@dataclass
class SynthMessage:
    ts: float
    sender: Sender
    command: Command
    kind: MessageKind
    root: Section
    fragment: bool = False
    wire: bytes = b""

    @property
    def segment_lengths(self) -> list[int]:
        n = len(self.wire)
        if self.fragment:
            return [SIGNATURE_FRAGMENT_SIZE, n - SIGNATURE_FRAGMENT_SIZE]
        return [min(MTU_SEGMENT, n - i) for i in range(0, n, MTU_SEGMENT)]


@dataclass
class SynthConnection:
    stream_id: int
    remote_ip: str
    remote_port: int
    local_port: int
    direction: Direction
    messages: list[SynthMessage] = field(default_factory=list)


@dataclass
class SynthCapture:
    records: list[PacketRecord]
    labels: dict[str, set[AnomalyCategory]]
    connections: list[SynthConnection]

    def label_lines(self) -> list[str]:
        return [
            f"{ip} {category.value}"
            for ip in sorted_ips(self.labels)
            for category in sorted(self.labels[ip], key=lambda c: c.order)
        ]


@dataclass
class RawStream:
    name: str
    payload: bytes
    meta: StreamMeta


ListSource = Callable[[], list[Section]]


class _Generator:
    def __init__(self, scenario: Scenario):
        self.s = scenario
        self.rng = random.Random(scenario.seed)
        reserved = {subnet24(p.ip) for p in scenario.peers} | {subnet24(scenario.local_ip)}
        self.alloc = SubnetAllocator(reserved)
        self.local_id = self._new_id()
        self.conns: list[SynthConnection] = []
        self.labels: dict[str, set[AnomalyCategory]] = {}
        self.siblings: list[str] = []

    # -- identifiers and addresses -----------------------------------------
    def _new_id(self) -> int:
        return self.rng.getrandbits(64) | 1

    def _random_ip(self) -> str:
        r = self.rng
        return f"{r.randint(110, 199)}.{r.randint(0, 255)}.{r.randint(0, 255)}.{r.randint(1, 254)}"

    def _label(self, ip: str, category: Optional[AnomalyCategory]) -> None:
        if category is not None:
            self.labels.setdefault(ip, set()).add(category)

    # -- payload sections --------------------------------------------------
    def _height(self, ts: float) -> int:
        return BASE_HEIGHT + int((ts - self.s.start_ts) // 120)

    def _payload_data(self, ts: float) -> epee.EpeeValue:
        height = self._height(ts)
        return epee.section({
            "current_height": epee.u64(height),
            "cumulative_difficulty": epee.u64(height * 1000),
            "top_id": epee.string(hashlib.sha256(height.to_bytes(8, "little")).digest()),
            "top_version": epee.u8(TOP_VERSION),
        })

    def _node_data(self, peer_id: int, support_flags: bool = True) -> epee.EpeeValue:
        node = {
            "network_id": epee.string(MAINNET_NETWORK_ID),
            "my_port": epee.u32(P2P_PORT),
            "peer_id": epee.u64(peer_id),
        }
        if support_flags:
            node["support_flags"] = epee.u32(1)
        return epee.section(node)

    def _entry(self, ip: str, last_seen: bool = False) -> Section:
        entry: Section = {
            "adr": epee.section({
                "type": epee.u8(1),
                "addr": epee.section({"m_ip": epee.u32(ip_to_uint32(ip)), "m_port": epee.u16(P2P_PORT)}),
            }),
            "id": epee.u64(self._new_id()),
        }
        if last_seen:
            entry["last_seen"] = epee.i64(LAST_SEEN_PLACEHOLDER)
        return entry

    # -- peer lists ----------------------------------------------------------
    def _diverse_ips(self, n: int) -> list[str]:
        ips: list[str] = []
        subnets: set[str] = set()
        while len(ips) < n:
            ip = self._random_ip()
            if subnet24(ip) not in subnets:
                subnets.add(subnet24(ip))
                ips.append(ip)
        return ips

    def _standard_list(self, last_seen: bool = False) -> list[Section]:
        n_sibling = 0
        if self.s.list_contamination and self.siblings:
            n_sibling = int(self.s.list_contamination * PEER_LIST_MAX + self.rng.random())
            n_sibling = min(n_sibling, len(self.siblings))
        ips = self.rng.sample(self.siblings, n_sibling) + self._diverse_ips(PEER_LIST_MAX - n_sibling)
        self.rng.shuffle(ips)
        return [self._entry(ip, last_seen) for ip in ips]

    def _list_source(self, behavior: Behavior, ip: str) -> ListSource:
        if behavior is Behavior.LAST_SEEN_SENDER:
            return lambda: self._standard_list(last_seen=True)
        if behavior is Behavior.LOW_DIVERSITY_PROMOTER:
            # fixed host pool so the subnets stay well below the saturation threshold
            pool: list[str] = []
            for i in range(LOW_DIVERSITY_SUBNETS):
                net = self.alloc.subnet()
                k = PEER_LIST_MAX // LOW_DIVERSITY_SUBNETS + (1 if i < PEER_LIST_MAX % LOW_DIVERSITY_SUBNETS else 0)
                pool += [str(net.network_address + h) for h in self.rng.sample(range(1, 255), k)]
            return lambda: [self._entry(a) for a in pool]
        if behavior is Behavior.SATURATED_SUBNET:
            def saturated() -> list[Section]:
                extra = self._diverse_ips(SATURATED_LIST_SIZE - len(self.siblings))
                return [self._entry(a) for a in self.siblings + extra]
            return saturated
        return self._standard_list

    # -- message flows -------------------------------------------------------
    def _connection(self, ip: str, direction: Direction) -> SynthConnection:
        sid = len(self.conns) + 1
        incoming = direction is Direction.INCOMING
        conn = SynthConnection(
            stream_id=sid,
            remote_ip=ip,
            remote_port=50000 + sid if incoming else P2P_PORT,
            local_port=P2P_PORT if incoming else 40000 + sid,
            direction=direction,
        )
        self.conns.append(conn)
        return conn

    def _send(self, conn: SynthConnection, ts: float, sender: Sender, command: Command,
              kind: MessageKind, root: Section, fragment: bool = False) -> None:
        conn.messages.append(SynthMessage(round(ts, 3), sender, command, kind, root, fragment))

    def _jittered(self, interval: float) -> float:
        return interval + self.rng.uniform(-self.s.jitter, self.s.jitter)

    def _standard_flow(
        self,
        conn: SynthConnection,
        start: float,
        end: float,
        peer_id: int,
        lists: ListSource,
        omit_flags: bool = False,
        remote_interval: float = TIMED_SYNC_INTERVAL,
        fragment: bool = False,
    ) -> None:
        remote = Sender.REMOTE
        local = Sender.LOCAL
        incoming = conn.direction is Direction.INCOMING

        def send(ts, sender, command, kind, root):
            self._send(conn, ts, sender, command, kind, root, fragment and sender is remote)

        def remote_node():
            return self._node_data(peer_id, support_flags=not omit_flags)

        initiator, responder = (remote, local) if incoming else (local, remote)
        hs_req = {"node_data": remote_node() if initiator is remote else self._node_data(self.local_id),
                  "payload_data": self._payload_data(start)}
        send(start, initiator, Command.HANDSHAKE, MessageKind.REQUEST, hs_req)
        hs_res: Section = {"node_data": remote_node() if responder is remote else self._node_data(self.local_id),
                           "payload_data": self._payload_data(start)}
        if responder is remote:
            hs_res["local_peerlist_new"] = epee.section_array(lists())
        send(start + RESPONSE_DELAY, responder, Command.HANDSHAKE, MessageKind.RESPONSE, hs_res)

        if omit_flags:
            send(start + 0.3, local, Command.SUPPORT_FLAGS, MessageKind.REQUEST, {})
            send(start + 0.35, remote, Command.SUPPORT_FLAGS, MessageKind.RESPONSE, {"support_flags": epee.u32(1)})
        if incoming:
            send(start + 0.5, local, Command.PING, MessageKind.REQUEST, {})
            send(start + 0.55, remote, Command.PING, MessageKind.RESPONSE,
                 {"status": epee.string("OK"), "peer_id": epee.u64(peer_id)})

        t = start + self._jittered(TIMED_SYNC_INTERVAL)
        while t + RESPONSE_DELAY < end:
            send(t, remote, Command.TIMED_SYNC, MessageKind.REQUEST, {"payload_data": self._payload_data(t)})
            send(t + RESPONSE_DELAY, local, Command.TIMED_SYNC, MessageKind.RESPONSE,
                 {"payload_data": self._payload_data(t)})
            t += self._jittered(remote_interval)

        t = start + TIMED_SYNC_INTERVAL / 2 + self.rng.uniform(0, self.s.jitter)
        while t + RESPONSE_DELAY < end:
            send(t, local, Command.TIMED_SYNC, MessageKind.REQUEST, {"payload_data": self._payload_data(t)})
            send(t + RESPONSE_DELAY, remote, Command.TIMED_SYNC, MessageKind.RESPONSE,
                 {"payload_data": self._payload_data(t), "local_peerlist_new": epee.section_array(lists())})
            t += self._jittered(TIMED_SYNC_INTERVAL)

    def _ping_flood(self, conn: SynthConnection, start: float, peer_id: int) -> None:
        self._send(conn, start, Sender.REMOTE, Command.HANDSHAKE, MessageKind.REQUEST,
                   {"node_data": self._node_data(peer_id), "payload_data": self._payload_data(start)})
        self._send(conn, start + RESPONSE_DELAY, Sender.LOCAL, Command.HANDSHAKE, MessageKind.RESPONSE,
                   {"node_data": self._node_data(self.local_id), "payload_data": self._payload_data(start)})
        for i in range(PING_BURST):
            t = start + 1.0 + i * PING_BURST_GAP
            self._send(conn, t, Sender.REMOTE, Command.PING, MessageKind.REQUEST, {})
            self._send(conn, t + RESPONSE_DELAY, Sender.LOCAL, Command.PING, MessageKind.RESPONSE,
                       {"status": epee.string("OK"), "peer_id": epee.u64(self.local_id)})
        # the first Timed Sync request goes unanswered; the node drops the peer later
        t = start + TIMED_SYNC_INTERVAL
        self._send(conn, t, Sender.LOCAL, Command.TIMED_SYNC, MessageKind.REQUEST,
                   {"payload_data": self._payload_data(t)})

    def _short_lived(self, conn: SynthConnection, start: float, peer_id: int) -> None:
        self._send(conn, start, Sender.REMOTE, Command.HANDSHAKE, MessageKind.REQUEST,
                   {"node_data": self._node_data(peer_id), "payload_data": self._payload_data(start)})
        self._send(conn, start + RESPONSE_DELAY, Sender.LOCAL, Command.HANDSHAKE, MessageKind.RESPONSE,
                   {"node_data": self._node_data(self.local_id), "payload_data": self._payload_data(start)})
        t = start + 0.2
        self._send(conn, t, Sender.REMOTE, Command.TIMED_SYNC, MessageKind.REQUEST,
                   {"payload_data": self._payload_data(t)})
        self._send(conn, t + RESPONSE_DELAY, Sender.LOCAL, Command.TIMED_SYNC, MessageKind.RESPONSE,
                   {"payload_data": self._payload_data(t)})

    # -- per-behavior wiring ---------------------------------------------------
    def _peer(self, spec: PeerSpec) -> None:
        s = self.s
        start = s.start_ts + self.rng.uniform(0.0, 5.0)
        end = s.start_ts + s.duration
        direction = spec.resolved_direction
        b = spec.behavior
        self._label(spec.ip, BEHAVIOR_CATEGORY[b])

        if b is Behavior.PING_FLOODER:
            self._ping_flood(self._connection(spec.ip, direction), start, self._new_id())
        elif b is Behavior.SHORT_LIVED_FLOODER:
            peer_id = self._new_id()
            for i in range(SHORT_LIVED_CONNECTIONS):
                self._short_lived(self._connection(spec.ip, direction), start + 5.0 + i * 6.0, peer_id)
        elif b is Behavior.ID_FLIPPER:
            first, second = self._new_id(), self._new_id()
            third = s.duration / 3
            for i, peer_id in enumerate((first, second, first)):
                seg_start = start + i * third
                self._standard_flow(self._connection(spec.ip, direction), seg_start,
                                    min(end, seg_start + third - 5.0), peer_id, self._standard_list)
        elif b is Behavior.ID_CLUSTER_MEMBER:
            shared, own = self._new_id(), self._new_id()
            half = s.duration / 2
            self._standard_flow(self._connection(spec.ip, direction), start, start + half - 5.0,
                                shared, self._standard_list)
            self._standard_flow(self._connection(spec.ip, direction), start + half, end, own, self._standard_list)
            partner = self.alloc.host()
            self._label(partner, AnomalyCategory.PEER_ID_CLUSTER)
            self._standard_flow(self._connection(partner, direction), start, end, shared, self._standard_list)
        elif b is Behavior.LIST_CLONER:
            cloned = [self._entry(ip) for ip in self._diverse_ips(PEER_LIST_MAX)]
            partner = self.alloc.host()
            self._label(partner, AnomalyCategory.HIGH_SIMILARITY_PEER_LIST)
            for ip in (spec.ip, partner):
                self._standard_flow(self._connection(ip, direction), start, end, self._new_id(), lambda: cloned)
        else:
            self._standard_flow(
                self._connection(spec.ip, direction),
                start,
                end,
                self._new_id(),
                self._list_source(b, spec.ip),
                omit_flags=b is Behavior.SUPPORT_FLAGS_OMITTER,
                remote_interval=THROTTLED_INTERVAL if b is Behavior.THROTTLER else TIMED_SYNC_INTERVAL,
                fragment=b is Behavior.SIG_ONLY_FRAGMENTER,
            )

    def _prepare_siblings(self) -> None:
        saturated = [p for p in self.s.peers if p.behavior is Behavior.SATURATED_SUBNET]
        if not saturated:
            return
        anchor = ipaddress.IPv4Address(saturated[0].ip)
        net = ipaddress.IPv4Network(f"{anchor}/24", strict=False)
        taken = {p.ip for p in self.s.peers}
        self.siblings = [str(h) for h in net.hosts() if str(h) not in taken][:SATURATED_SIBLINGS]
        for ip in self.siblings:
            self._label(ip, AnomalyCategory.SATURATED_SUBNET_MEMBER)

    def run(self) -> list[SynthConnection]:
        self._prepare_siblings()
        for spec in self.s.peers:
            self._peer(spec)
        for conn in self.conns:
            conn.messages.sort(key=lambda m: m.ts)
            for m in conn.messages:
                payload = epee.encode_storage(m.root)
                m.wire = encode_frame(LevinFrame.for_message(m.command, m.kind, payload))
        return self.conns


def _to_record(conn: SynthConnection, m: SynthMessage, local_ip: str) -> PacketRecord:
    local_end = (local_ip, conn.local_port)
    remote_end = (conn.remote_ip, conn.remote_port)
    src, dst = (local_end, remote_end) if m.sender is Sender.LOCAL else (remote_end, local_end)
    return PacketRecord(
        ts=m.ts,
        src_ip=src[0],
        src_port=src[1],
        dst_ip=dst[0],
        dst_port=dst[1],
        command=int(m.command),
        kind=m.kind,
        fields=plain_fields(flatten(m.root)),
        stream_id=conn.stream_id,
        segment_lengths=m.segment_lengths,
    )


def generate(scenario: Scenario) -> SynthCapture:
    """
    Render a scenario as capture records plus ground-truth labels.

    Raises:
        InvalidScenario: The scenario is inconsistent
    """
    scenario.validate()
    gen = _Generator(scenario)
    conns = gen.run()
    records = [_to_record(c, m, scenario.local_ip) for c in conns for m in c.messages]
    records.sort(key=record_sort_key)
    return SynthCapture(records=records, labels=gen.labels, connections=conns)


def generate_raw(scenario: Scenario) -> list[RawStream]:
    """Render a scenario as per-direction Levin byte streams with metadata sidecars."""
    capture = generate(scenario)
    streams = []
    for conn in capture.connections:
        for sender in (Sender.LOCAL, Sender.REMOTE):
            msgs = [m for m in conn.messages if m.sender is sender]
            if not msgs:
                continue
            local_end = (scenario.local_ip, conn.local_port)
            remote_end = (conn.remote_ip, conn.remote_port)
            src, dst = (local_end, remote_end) if sender is Sender.LOCAL else (remote_end, local_end)
            meta = StreamMeta(
                src_ip=src[0],
                src_port=src[1],
                dst_ip=dst[0],
                dst_port=dst[1],
                stream_id=conn.stream_id,
                ts_base=msgs[0].ts,
                frame_ts=[m.ts for m in msgs],
                segment_lengths=[m.segment_lengths for m in msgs],
            )
            streams.append(RawStream(
                name=f"stream{conn.stream_id:05d}-{sender.value}",
                payload=b"".join(m.wire for m in msgs),
                meta=meta,
            ))
    return streams


def write_capture(out_dir: str | Path, capture: SynthCapture) -> tuple[Path, Path]:
    out = ensure_directory_exists(out_dir)
    capture_path = out / CAPTURE_FILE
    labels_path = out / LABELS_FILE
    write_jsonl(capture_path, capture.records)
    labels_path.write_text("".join(f"{line}\n" for line in capture.label_lines()), encoding="utf-8")
    return capture_path, labels_path


def write_raw(out_dir: str | Path, streams: list[RawStream]) -> list[Path]:
    out = ensure_directory_exists(out_dir)
    paths = []
    for stream in streams:
        path = out / f"{stream.name}.bin"
        path.write_bytes(stream.payload)
        sidecar_path(path).write_text(json.dumps(stream.meta.to_dict(), sort_keys=True), encoding="utf-8")
        paths.append(path)
    return paths


def read_labels(path: str | Path) -> dict[str, set[AnomalyCategory]]:
    labels: dict[str, set[AnomalyCategory]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        ip, category = line.split()
        labels.setdefault(ip, set()).add(AnomalyCategory.from_string(category))
    return labels
