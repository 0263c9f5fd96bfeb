"""Single-threaded middleware instance with a non-preemptive fixed-priority executor."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .engine import NS_PER_MS, NS_PER_S, Engine, RngStream
from .packet import DEFAULT_RT_PCP, RTPS_PORT, Frame, TrafficClass

log = logging.getLogger(__name__)

META_SKB_PRIORITY = 6
META_TOPIC = "DCPSParticipant"


class OperationKind(Enum):
    USER_RX = "user_rx"
    USER_TX = "user_tx"
    META_RX = "meta_rx"
    META_TX_DISCOVERY = "meta_tx_discovery"
    LIVELINESS_CHECK = "liveliness_check"


DEFAULT_PRIORITY_ORDER = (
    OperationKind.USER_RX,
    OperationKind.USER_TX,
    OperationKind.META_RX,
    OperationKind.META_TX_DISCOVERY,
    OperationKind.LIVELINESS_CHECK,
)

USER_KINDS = (OperationKind.USER_RX, OperationKind.USER_TX)


@dataclass
class CostModel:
    """Uniform execution-cost ranges per operation kind, in ns.

    The defaults are calibration knobs, not measured values.
    """

    ranges: dict[OperationKind, tuple[int, int]] = field(default_factory=dict)

    @classmethod
    def default(cls, user=(2_000, 6_000), housekeeping=(5_000, 20_000)) -> CostModel:
        ranges = {k: (housekeeping if k not in USER_KINDS else user) for k in OperationKind}
        return cls(ranges)

    def __post_init__(self):
        for kind, (lo, hi) in self.ranges.items():
            if not 0 < lo <= hi:
                raise ValueError(f"cost range for {kind.name} must satisfy 0 < min <= max, got {lo}, {hi}")

    def draw(self, kind: OperationKind, rng: RngStream) -> int:
        lo, hi = self.ranges[kind]
        return lo if lo == hi else rng.randint(lo, hi)

    @property
    def max_cost(self) -> int:
        return max(hi for _, hi in self.ranges.values())


class PendingOp:
    __slots__ = ("op_id", "kind", "release_time", "exec_cost", "bound_frame", "action",
                 "start", "finish", "blocking_remaining", "queued_same_kind")

    def __init__(self, kind: OperationKind, release_time: int, exec_cost: int,
                 bound_frame: Frame | None = None,
                 action: Callable[[PendingOp], None] | None = None):
        self.op_id = -1
        self.kind = kind
        self.release_time = release_time
        self.exec_cost = exec_cost
        self.bound_frame = bound_frame
        self.action = action
        self.start: int | None = None
        self.finish: int | None = None
        # Remaining cost of the in-flight op when this one was released.
        self.blocking_remaining = 0
        self.queued_same_kind = 0

    def __repr__(self) -> str:
        return (f"PendingOp({self.kind.name}, release={self.release_time}, "
                f"cost={self.exec_cost}, start={self.start})")


class Executor:
    """Non-preemptive fixed-priority dispatcher, FIFO within a kind.

    Exactly one operation runs at a time. When every ready queue is empty
    the executor suspends; the next enqueue schedules a dispatch event at
    the current instant, so all releases sharing that instant are visible
    to the priority decision.
    """

    def __init__(self, engine: Engine, name: str,
                 priority_order: tuple[OperationKind, ...] = DEFAULT_PRIORITY_ORDER,
                 keep_log: bool = True):
        if sorted(k.name for k in priority_order) != sorted(k.name for k in OperationKind):
            raise ValueError("priority_order must list every OperationKind exactly once")
        self.engine = engine
        self.name = name
        self.priority_order = tuple(priority_order)
        self.rank = {kind: i for i, kind in enumerate(self.priority_order)}
        self.ready: list[deque[PendingOp]] = [deque() for _ in self.priority_order]
        self.in_flight: tuple[PendingOp, int] | None = None
        self.suspended = True
        self._next_id = 0
        self.log: list[PendingOp] | None = [] if keep_log else None
        self.dispatched = 0

    def enqueue_op(self, op: PendingOp) -> None:
        now = self.engine.now
        if op.release_time != now:
            raise ValueError(f"op released at {op.release_time} enqueued at {now}")
        op.op_id = self._next_id
        self._next_id += 1
        if self.in_flight is not None:
            op.blocking_remaining = self.in_flight[1] - now
        queue = self.ready[self.rank[op.kind]]
        op.queued_same_kind = len(queue)
        queue.append(op)
        if self.suspended:
            self.suspended = False
            self.engine.schedule(now, self.name, "dispatch", self._dispatch_event)

    def _dispatch_event(self, _payload) -> None:
        if self.in_flight is None:
            self.dispatch_next()

    def dispatch_next(self) -> PendingOp | None:
        if self.in_flight is not None:
            raise RuntimeError("dispatch_next called with an operation in flight")
        for queue in self.ready:
            if queue:
                op = queue.popleft()
                break
        else:
            self.suspended = True
            return None
        now = self.engine.now
        op.start = now
        op.finish = finish = now + op.exec_cost
        self.in_flight = (op, finish)
        self.dispatched += 1
        self.engine.schedule(finish, self.name, op.kind.value, self._complete, op)
        return op

    def _complete(self, op: PendingOp) -> None:
        self.in_flight = None
        if self.log is not None:
            self.log.append(op)
        if op.action is not None:
            op.action(op)
        self.dispatch_next()

    @property
    def pending_count(self) -> int:
        return sum(len(q) for q in self.ready)


@dataclass
class MiddlewareConfig:
    priority_order: tuple[OperationKind, ...] = DEFAULT_PRIORITY_ORDER
    user_cost_ns: tuple[int, int] = (2_000, 6_000)
    housekeeping_cost_ns: tuple[int, int] = (5_000, 20_000)
    discovery_period_ns: int = 100 * NS_PER_MS
    liveliness_period_ns: int = 1 * NS_PER_S
    meta_rx_rate_hz: float = 0.0
    meta_payload_len: int = 256
    rt_pcp: int = DEFAULT_RT_PCP

    def cost_model(self) -> CostModel:
        return CostModel.default(self.user_cost_ns, self.housekeeping_cost_ns)


@dataclass
class Topic:
    name: str
    flow_id: int
    publisher: bool = False
    on_data: Callable[[Frame], None] | None = None


class Middleware:
    """One host's middleware participant.

    ``user_egress`` and ``meta_egress`` are wired by the host to the fast
    path or the kernel-stack path.
    """

    def __init__(self, engine: Engine, host: str, cfg: MiddlewareConfig,
                 recorder=None, keep_log: bool = True):
        self.engine = engine
        self.host = host
        self.cfg = cfg
        self.costs = cfg.cost_model()
        self.rng = engine.rng(f"{host}:exec_cost")
        self.executor = Executor(engine, f"{host}.mw", cfg.priority_order, keep_log)
        self.recorder = recorder
        self.topics: dict[str, Topic] = {}
        self.user_egress: Callable[[Frame], None] | None = None
        self.meta_egress: Callable[[Frame], None] | None = None
        self.on_rx_done: Callable[[Frame], None] | None = None
        self.dropped_unknown_topic = 0
        self.received = 0
        self._meta_seq = 0
        self._meta_flow = 0

    def add_publisher(self, topic: str, flow_id: int) -> None:
        t = self.topics.setdefault(topic, Topic(topic, flow_id))
        t.publisher = True
        t.flow_id = flow_id

    def add_subscriber(self, topic: str, on_data: Callable[[Frame], None] | None = None) -> None:
        t = self.topics.setdefault(topic, Topic(topic, -1))
        t.on_data = on_data or (lambda frame: None)

    def _op(self, kind: OperationKind, frame: Frame | None, action) -> PendingOp:
        return PendingOp(kind, self.engine.now, self.costs.draw(kind, self.rng), frame, action)

    # -- user traffic -----------------------------------------------------

    def publish(self, topic: str, payload_len: int, seq_no: int) -> Frame:
        t = self.topics.get(topic)
        if t is None or not t.publisher:
            raise KeyError(f"{self.host}: no publisher for topic {topic!r}")
        frame = Frame(t.flow_id, seq_no, TrafficClass.REAL_TIME, self.cfg.rt_pcp, payload_len,
                      is_rtps=True, topic=topic, src=self.host, dst_port=RTPS_PORT,
                      frame_id=self.engine.next_frame_id())
        frame.ts_app_send = self.engine.now
        if self.recorder is not None:
            self.recorder.sent(self.host, frame)
        self.executor.enqueue_op(self._op(OperationKind.USER_TX, frame, self._send_user))
        return frame

    def _send_user(self, op: PendingOp) -> None:
        self.user_egress(op.bound_frame)

    def receive(self, frame: Frame, wake_ns: int = 0) -> None:
        """Entry point from the network paths; applies wake latency if idle."""
        if wake_ns and self.executor.suspended:
            self.engine.after(wake_ns, self.executor.name, "wake", self.on_frame_delivered, frame)
        else:
            self.on_frame_delivered(frame)

    def on_frame_delivered(self, frame: Frame) -> None:
        t = self.topics.get(frame.topic)
        if frame.topic == META_TOPIC:
            self.executor.enqueue_op(self._op(OperationKind.META_RX, frame, self._consume_meta))
        elif t is None or t.on_data is None:
            self.dropped_unknown_topic += 1
            if self.on_rx_done is not None:
                self.on_rx_done(frame)
        else:
            self.executor.enqueue_op(self._op(OperationKind.USER_RX, frame, self._consume_user))

    def _consume_user(self, op: PendingOp) -> None:
        frame = op.bound_frame
        frame.ts_app_recv = self.engine.now
        self.received += 1
        if self.recorder is not None:
            self.recorder.received(self.host, frame)
        if self.on_rx_done is not None:
            self.on_rx_done(frame)
        self.topics[frame.topic].on_data(frame)

    def _consume_meta(self, op: PendingOp) -> None:
        frame = op.bound_frame
        frame.ts_app_recv = self.engine.now
        if self.on_rx_done is not None:
            self.on_rx_done(frame)

    # -- housekeeping -------------------------------------------------------

    def start_housekeeping(self, until: int) -> None:
        cfg = self.cfg
        if cfg.discovery_period_ns > 0:
            self._periodic(OperationKind.META_TX_DISCOVERY, cfg.discovery_period_ns, until)
        if cfg.liveliness_period_ns > 0:
            self._periodic(OperationKind.LIVELINESS_CHECK, cfg.liveliness_period_ns, until)
        if cfg.meta_rx_rate_hz > 0:
            self._periodic(OperationKind.META_RX, round(NS_PER_S / cfg.meta_rx_rate_hz), until)

    def _periodic(self, kind: OperationKind, period: int, until: int) -> None:
        def tick(k: int) -> None:
            self.periodic_housekeeping_tick(kind)
            nxt = (k + 1) * period
            if nxt < until:
                self.engine.schedule(nxt, self.executor.name, f"tick_{kind.value}", tick, k + 1)

        self.engine.schedule(0, self.executor.name, f"tick_{kind.value}", tick, 0)

    def periodic_housekeeping_tick(self, kind: OperationKind) -> None:
        action = self._send_discovery if kind is OperationKind.META_TX_DISCOVERY else None
        self.executor.enqueue_op(self._op(kind, None, action))

    def _send_discovery(self, op: PendingOp) -> None:
        frame = Frame(self._meta_flow, self._meta_seq, TrafficClass.BEST_EFFORT, 0,
                      self.cfg.meta_payload_len, is_rtps=True, topic=META_TOPIC,
                      src=self.host, dst_port=RTPS_PORT, skb_priority=META_SKB_PRIORITY,
                      frame_id=self.engine.next_frame_id())
        self._meta_seq += 1
        frame.ts_app_send = self.engine.now
        self.meta_egress(frame)
