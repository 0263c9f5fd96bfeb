"""Open-loop ping/pong pair and constant-bit-rate UDP interference."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .engine import NS_PER_S, NS_PER_US, Engine, derive_seed
from .middleware import Middleware
from .netstack import NetStack
from .packet import IPERF_PORT, Frame, TrafficClass

PING_TOPIC = "RTTPing"
PONG_TOPIC = "RTTPong"
PING_FLOW = 1
PONG_FLOW = 2


@dataclass
class RtWorkloadConfig:
    period_ns: int = 500 * NS_PER_US
    payload_len: int = 1024
    topic_fwd: str = PING_TOPIC
    topic_ret: str = PONG_TOPIC
    duration_ns: int = 10 * NS_PER_S

    @property
    def sends(self) -> int:
        # Sends at k * period for every k with k * period < duration.
        return -(-self.duration_ns // self.period_ns)


@dataclass
class InterferenceConfig:
    enabled: bool = False
    n_flows: int = 50
    bidirectional: bool = True
    aggregate_target_bps: int = 2_500_000_000
    payload_len: int = 1024

    @property
    def per_flow_bps(self) -> Fraction:
        return Fraction(self.aggregate_target_bps, self.n_flows)

    @property
    def interval_ns(self) -> Fraction:
        """Inter-packet gap of one flow; the target counts payload bits only."""
        return Fraction(self.payload_len * 8 * NS_PER_S) / self.per_flow_bps


class RtSender:
    """Publishes the ping topic every period, never waiting for replies."""

    def __init__(self, engine: Engine, mw: Middleware, cfg: RtWorkloadConfig):
        self.engine = engine
        self.mw = mw
        self.cfg = cfg
        self.sent = 0

    def start(self) -> None:
        if self.cfg.sends > 0:
            self.engine.schedule(0, f"{self.mw.host}.rt", "rt_send", self.rt_sender_tick, 0)

    def rt_sender_tick(self, k: int) -> None:
        self.mw.publish(self.cfg.topic_fwd, self.cfg.payload_len, k)
        self.sent += 1
        if k + 1 < self.cfg.sends:
            self.engine.schedule((k + 1) * self.cfg.period_ns, f"{self.mw.host}.rt", "rt_send",
                                 self.rt_sender_tick, k + 1)


class RtEcho:
    """Receiver callback: answer every ping with a pong of the same seq."""

    def __init__(self, mw: Middleware, cfg: RtWorkloadConfig):
        self.mw = mw
        self.cfg = cfg
        self.echoed = 0

    def rt_echo(self, frame: Frame) -> None:
        self.mw.publish(self.cfg.topic_ret, frame.payload_len, frame.seq_no)
        self.echoed += 1


def phase_offset(seed: int, flow_id: int, interval_ns: int) -> int:
    """Deterministic start offset of a flow within one pacing interval."""
    return derive_seed(seed, f"phase:{flow_id}") % max(1, interval_ns)


class InterferenceGenerator:
    """Per-flow CBR sources on one host feeding the kernel stack.

    Flow k emits at ``phase + round(j * interval)`` for j = 0, 1, ... while
    that instant is before ``until``; rounding (half up) against the exact
    rational interval keeps the long-run rate exact.
    """

    def __init__(self, engine: Engine, host: str, stack: NetStack, cfg: InterferenceConfig,
                 first_flow_id: int, until: int, seed: int):
        self.engine = engine
        self.host = host
        self.stack = stack
        self.cfg = cfg
        self.until = until
        self.interval = cfg.interval_ns
        # Integer form of the rational interval for the per-tick rounding.
        self._num2 = 2 * self.interval.numerator
        self._den = self.interval.denominator
        base = int(self.interval)
        self.flows = [(first_flow_id + i, phase_offset(seed, first_flow_id + i, base))
                      for i in range(cfg.n_flows)]
        self.emitted = 0

    @property
    def emitted_payload_bits(self) -> int:
        return self.emitted * self.cfg.payload_len * 8

    def start(self) -> None:
        if not self.cfg.enabled:
            return
        for flow_id, phase in self.flows:
            if phase < self.until:
                self.engine.schedule(phase, self.host, "be_tick", self.interference_flow_tick,
                                     (flow_id, phase, 0))

    def interference_flow_tick(self, state) -> None:
        flow_id, phase, j = state
        cfg = self.cfg
        engine = self.engine
        frame = Frame(flow_id, j, TrafficClass.BEST_EFFORT, 0, cfg.payload_len,
                      src=self.host, dst_port=IPERF_PORT, frame_id=engine.next_frame_id())
        frame.ts_app_send = engine.now
        self.emitted += 1
        self.stack.stack_tx(frame)
        den = self._den
        nxt = phase + ((j + 1) * self._num2 + den) // (2 * den)
        if nxt < self.until:
            engine.schedule(nxt, self.host, "be_tick", self.interference_flow_tick,
                            (flow_id, phase, j + 1))
