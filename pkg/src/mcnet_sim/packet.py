"""Frame records, wire-size arithmetic and classification predicates."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import count

RTPS_MAGIC = b"RTPS"

# Header sizes in bytes. Preamble + IFG only costs wire time.
RTPS_LITE_HEADER = 20
UDP_HEADER = 8
IPV4_HEADER = 20
ETH_HEADER_WITH_VLAN = 18
FCS = 4
PREAMBLE_PLUS_IFG = 20

FRAME_OVERHEAD = RTPS_LITE_HEADER + UDP_HEADER + IPV4_HEADER + ETH_HEADER_WITH_VLAN + FCS
WIRE_OVERHEAD = FRAME_OVERHEAD + PREAMBLE_PLUS_IFG

NUM_QUEUES = 4
DEFAULT_RT_PCP = 5
RTPS_PORT = 7400
IPERF_PORT = 5201


class TrafficClass(Enum):
    REAL_TIME = "real_time"
    BEST_EFFORT = "best_effort"


class Path(Enum):
    FASTPATH = "fastpath"
    STACK = "stack"


_frame_ids = count()


class Frame:
    """One Ethernet/802.1Q/IPv4/UDP frame moving through the model.

    Only the fields the timing model needs are carried; payload bytes are
    never materialised.
    """

    __slots__ = (
        "frame_id", "flow_id", "seq_no", "traffic_class", "vlan_pcp", "is_udp",
        "is_rtps", "payload_len", "topic", "src", "dst_port", "skb_priority",
        "ts_app_send", "ts_nic_tx_enq", "ts_wire_start", "ts_nic_rx", "ts_app_recv",
        "tx_queue", "rx_queue", "via_xsk",
    )

    def __init__(self, flow_id: int, seq_no: int, traffic_class: TrafficClass,
                 vlan_pcp: int, payload_len: int, *, is_udp: bool = True,
                 is_rtps: bool = False, topic: str | None = None, src: str = "",
                 dst_port: int = 0, skb_priority: int = 0, frame_id: int | None = None):
        if is_rtps and not is_udp:
            raise ValueError("an RTPS frame must be UDP")
        if not 0 <= vlan_pcp <= 7:
            raise ValueError(f"vlan_pcp out of range: {vlan_pcp}")
        self.frame_id = next(_frame_ids) if frame_id is None else frame_id
        self.flow_id = flow_id
        self.seq_no = seq_no
        self.traffic_class = traffic_class
        self.vlan_pcp = vlan_pcp
        self.is_udp = is_udp
        self.is_rtps = is_rtps
        self.payload_len = payload_len
        self.topic = topic
        self.src = src
        self.dst_port = dst_port
        self.skb_priority = skb_priority
        self.ts_app_send = None
        self.ts_nic_tx_enq = None
        self.ts_wire_start = None
        self.ts_nic_rx = None
        self.ts_app_recv = None
        self.tx_queue = None
        self.rx_queue = None
        self.via_xsk = False

    @property
    def is_real_time(self) -> bool:
        return self.traffic_class is TrafficClass.REAL_TIME

    def timestamps(self) -> list[int | None]:
        return [self.ts_app_send, self.ts_nic_tx_enq, self.ts_wire_start,
                self.ts_nic_rx, self.ts_app_recv]

    def __repr__(self) -> str:
        return (f"Frame(id={self.frame_id}, flow={self.flow_id}, seq={self.seq_no}, "
                f"{self.traffic_class.name}, {self.payload_len}B, topic={self.topic})")


def payload_starts_with_magic(payload: bytes) -> bool:
    return payload[:4] == RTPS_MAGIC


def wire_size(payload_len: int) -> int:
    """Frame size on the wire excluding preamble and inter-frame gap."""
    if payload_len < 1:
        raise ValueError("payload_len must be >= 1")
    return payload_len + FRAME_OVERHEAD


def serialization_delay_exact(payload_len: int, line_rate_bps: int) -> Fraction:
    if line_rate_bps <= 0:
        raise ValueError("line_rate_bps must be positive")
    return Fraction((payload_len + WIRE_OVERHEAD) * 8 * 1_000_000_000, line_rate_bps)


def serialization_delay(payload_len: int, line_rate_bps: int) -> int:
    """Nanoseconds the serializer is busy with one frame, rounded half-even."""
    return round(serialization_delay_exact(payload_len, line_rate_bps))


def classify_filter_program(frame: Frame) -> Path:
    """The fast-path ingress filter: only UDP frames carrying the RTPS magic."""
    if frame.is_udp and frame.is_rtps:
        return Path.FASTPATH
    return Path.STACK


def flow_hash(flow_id: int) -> int:
    """splitmix64 finaliser; a fixed stand-in for RSS/XPS hashing."""
    z = (flow_id + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class FilterRule:
    vlan_pcp: int
    rx_queue: int


@dataclass(frozen=True)
class FilterTable:
    """Ordered ntuple rules; first match wins.

    Frames that match no rule are hash-spread over the queues no rule claims.
    """

    rules: tuple[FilterRule, ...] = ()
    num_queues: int = NUM_QUEUES
    spread: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        claimed = {r.rx_queue for r in self.rules}
        spread = tuple(q for q in range(self.num_queues) if q not in claimed)
        object.__setattr__(self, "spread", spread or tuple(range(self.num_queues)))

    @classmethod
    def real_time(cls, pcp: int = DEFAULT_RT_PCP) -> FilterTable:
        return cls((FilterRule(pcp, 0),))


def ingress_steer(frame: Frame, filters: FilterTable) -> int:
    for rule in filters.rules:
        if frame.vlan_pcp == rule.vlan_pcp:
            return rule.rx_queue
    spread = filters.spread
    return spread[flow_hash(frame.flow_id) % len(spread)]
