"""Multi-queue NIC and full-duplex link.

Four TX and four RX hardware queues. TX uses a strict-priority arbiter
(lowest index wins) feeding one non-preemptive serializer. RX frames are
steered by the filter table, and servicing is driven by interrupts (with
optional coalescing) or by NAPI polling.

RX queues are grouped onto interrupt vectors; queues sharing a vector share
its interrupt/polling mode, so load on one queue keeps its siblings polled.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .engine import NS_PER_US, Engine
from .packet import NUM_QUEUES, FilterTable, Frame, TrafficClass, ingress_steer, serialization_delay


class NapiMode(Enum):
    INTERRUPT = "interrupt"
    POLLING = "polling"


@dataclass
class NicConfig:
    queue_capacity: int = 256
    line_rate_bps: int = 2_500_000_000
    propagation_ns: int = 100
    coalescing_us: int = 0
    coalescing_frames: int = 0
    napi_enabled: bool = True
    napi_budget: int = 64
    napi_poll_interval_ns: int = 20_000
    napi_exit_idle_polls: int = 2
    napi_backlog_threshold: int = 1
    irq_latency_ns: int = 30_000
    rx_vectors: int = 1
    filter_table: FilterTable = field(default_factory=FilterTable)
    # Credit-based shaping on TX-0 is deliberately not modelled.
    tsn_shaper: bool = False
    record_occupancy: bool = False

    def validate(self) -> None:
        if self.tsn_shaper:
            raise NotImplementedError("TSN shaping on TX-0 is not implemented")
        if self.rx_vectors not in (1, 2, 4):
            raise ValueError("rx_vectors must be 1, 2 or 4")
        for name in ("queue_capacity", "line_rate_bps", "napi_budget", "napi_poll_interval_ns",
                     "napi_backlog_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"nic.{name} must be positive")
        for name in ("propagation_ns", "coalescing_us", "coalescing_frames",
                     "napi_exit_idle_polls", "irq_latency_ns"):
            if getattr(self, name) < 0:
                raise ValueError(f"nic.{name} must be >= 0")


def arbiter_select(tx_queues) -> int | None:
    """Strict priority: the lowest-index non-empty TX queue."""
    for i, q in enumerate(tx_queues):
        if q:
            return i
    return None


class _Vector:
    __slots__ = ("index", "queues", "mode", "idle_polls", "coalesce_gen", "coalesce_frames",
                 "coalesce_armed", "irq_raised", "first_unserviced", "interrupts", "polls")

    def __init__(self, index: int, queues: list[int]):
        self.index = index
        self.queues = queues
        self.mode = NapiMode.INTERRUPT
        self.idle_polls = 0
        self.coalesce_gen = 0
        self.coalesce_frames = 0
        self.coalesce_armed = False
        self.irq_raised = False
        self.first_unserviced: int | None = None
        self.interrupts = 0
        self.polls = 0


class Nic:
    def __init__(self, engine: Engine, name: str, cfg: NicConfig):
        cfg.validate()
        self.engine = engine
        self.name = name
        self.cfg = cfg
        self.capacity = cfg.queue_capacity
        self.tx_queues: list[deque[Frame]] = [deque() for _ in range(NUM_QUEUES)]
        self.rx_queues: list[deque[Frame]] = [deque() for _ in range(NUM_QUEUES)]
        self.filters = cfg.filter_table
        self.peer: Nic | None = None
        # (arrival instant, frame) in arrival order; not yet in an RX queue.
        self.inbound: deque[tuple[int, Frame]] = deque()
        self._arrival_armed = False
        self.serializing: Frame | None = None
        self._ser_cache: dict[int, int] = {}
        self._steer_cache: dict[tuple[int, int], int] = {}
        self.vectors = [_Vector(v, [q for q in range(NUM_QUEUES) if q % cfg.rx_vectors == v])
                        for v in range(cfg.rx_vectors)]
        self._vector_of = [self.vectors[q % cfg.rx_vectors] for q in range(NUM_QUEUES)]

        # Wired by the host.
        self.on_tx_slot: Callable[[int], None] = lambda q: None
        self.on_tx_complete: Callable[[Frame], None] = lambda f: None
        self.rx_busy: Callable[[int], bool] = lambda q: False
        self.rx_handler: Callable[[int, list[Frame]], None] = lambda q, frames: None

        self.tx_drops = [0] * NUM_QUEUES
        self.rx_drops = [0] * NUM_QUEUES
        self.wire_tx = 0
        self.wire_rx = 0
        self.rt_payload_bits = 0
        self.be_payload_bits = 0
        self.rt_tx_queues: Counter = Counter()
        self.rt_rx_queues: Counter = Counter()
        self.occupancy: list[tuple] | None = [] if cfg.record_occupancy else None
        self.interrupt_delays: list[int] = []

    # -- transmit ---------------------------------------------------------

    def enqueue_tx(self, q: int, frame: Frame) -> bool:
        queue = self.tx_queues[q]
        if len(queue) >= self.capacity:
            self.tx_drops[q] += 1
            return False
        frame.ts_nic_tx_enq = self.engine.now
        frame.tx_queue = q
        queue.append(frame)
        if self.serializing is None:
            self._start_tx()
        return True

    def tx_has_room(self, q: int) -> bool:
        return len(self.tx_queues[q]) < self.capacity

    def arbiter_select(self) -> int | None:
        return arbiter_select(self.tx_queues)

    def _serialization(self, payload_len: int) -> int:
        ser = self._ser_cache.get(payload_len)
        if ser is None:
            ser = self._ser_cache[payload_len] = serialization_delay(payload_len, self.cfg.line_rate_bps)
        return ser

    def _start_tx(self) -> None:
        queues = self.tx_queues
        for q in range(NUM_QUEUES):
            if queues[q]:
                break
        else:
            return
        if self.occupancy is not None:
            self.occupancy.append((self.engine.now, q, *(len(x) for x in queues)))
        self.wire_transmit(queues[q].popleft())
        self.on_tx_slot(q)

    def wire_transmit(self, frame: Frame) -> None:
        engine = self.engine
        now = engine.now
        self.serializing = frame
        frame.ts_wire_start = now
        if frame.traffic_class is TrafficClass.REAL_TIME:
            self.rt_tx_queues[frame.tx_queue] += 1
        ser = self._ser_cache.get(frame.payload_len)
        if ser is None:
            ser = self._serialization(frame.payload_len)
        engine.schedule(now + ser, self.name, "tx_done", self._tx_done, frame)

    def _tx_done(self, frame: Frame) -> None:
        self.serializing = None
        self.wire_tx += 1
        if frame.traffic_class is TrafficClass.REAL_TIME:
            self.rt_payload_bits += frame.payload_len * 8
        else:
            self.be_payload_bits += frame.payload_len * 8
        self.peer.arrive(frame, self.engine.now + self.cfg.propagation_ns)
        self.on_tx_complete(frame)
        if self.serializing is None:
            self._start_tx()

    # -- receive ------------------------------------------------------------

    def steer(self, frame: Frame) -> int:
        key = (frame.flow_id, frame.vlan_pcp)
        q = self._steer_cache.get(key)
        if q is None:
            q = self._steer_cache[key] = ingress_steer(frame, self.filters)
        return q

    def arrive(self, frame: Frame, at: int) -> None:
        """Accept a frame that reaches this port at ``at``.

        Arrivals are materialised into RX queues lazily: an event per frame is
        only needed while some vector would react to it with an interrupt.
        Otherwise the next poll pulls every arrival up to its own instant,
        which is equivalent because only polls dequeue RX queues.
        """
        self.inbound.append((at, frame))
        if not self._arrival_armed and self._listening():
            self._arm_arrival(at)

    def _listening(self) -> bool:
        for vec in self.vectors:
            if vec.mode is NapiMode.INTERRUPT and not vec.irq_raised:
                return True
        return False

    def _arm_arrival(self, at: int) -> None:
        self._arrival_armed = True
        self.engine.schedule(at, self.name, "rx_arrive", self._on_arrival)

    def _on_arrival(self, _payload) -> None:
        self._arrival_armed = False
        self.materialize()
        if self.inbound and self._listening():
            self._arm_arrival(self.inbound[0][0])

    def materialize(self) -> None:
        """Move every arrival due by now into its RX queue."""
        inbound = self.inbound
        now = self.engine.now
        while inbound and inbound[0][0] <= now:
            at, frame = inbound.popleft()
            self.rx_deliver(frame, at)

    def rx_deliver(self, frame: Frame, at: int | None = None) -> None:
        self.wire_rx += 1
        q = self._steer_cache.get((frame.flow_id, frame.vlan_pcp))
        if q is None:
            q = self.steer(frame)
        queue = self.rx_queues[q]
        if len(queue) >= self.capacity:
            self.rx_drops[q] += 1
            return
        frame.ts_nic_rx = self.engine.now if at is None else at
        frame.rx_queue = q
        if frame.traffic_class is TrafficClass.REAL_TIME:
            self.rt_rx_queues[q] += 1
        queue.append(frame)
        vec = self._vector_of[q]
        if vec.mode is NapiMode.INTERRUPT and not vec.irq_raised:
            self.raise_or_coalesce(q)

    def napi_mode(self, q: int) -> NapiMode:
        return self._vector_of[q].mode

    def raise_or_coalesce(self, q: int) -> None:
        vec = self._vector_of[q]
        now = self.engine.now
        cfg = self.cfg
        if vec.first_unserviced is None:
            vec.first_unserviced = now
        if cfg.coalescing_us == 0:
            self._raise(vec)
            return
        vec.coalesce_frames += 1
        if cfg.coalescing_frames and vec.coalesce_frames >= cfg.coalescing_frames:
            self._raise(vec)
            return
        if not vec.coalesce_armed:
            vec.coalesce_armed = True
            self.engine.schedule(now + cfg.coalescing_us * NS_PER_US, self.name, "coalesce_timer",
                                 self._coalesce_timer, (vec, vec.coalesce_gen))

    def _coalesce_timer(self, payload) -> None:
        vec, gen = payload
        if gen == vec.coalesce_gen and vec.coalesce_armed:
            self._raise(vec)

    def _raise(self, vec: _Vector) -> None:
        now = self.engine.now
        vec.coalesce_gen += 1
        vec.coalesce_armed = False
        vec.coalesce_frames = 0
        vec.irq_raised = True
        vec.interrupts += 1
        self.interrupt_delays.append(now - vec.first_unserviced)
        vec.first_unserviced = None
        self.engine.schedule(now + self.cfg.irq_latency_ns, self.name, "irq_service",
                             self._irq_service, vec)

    def _irq_service(self, vec: _Vector) -> None:
        self.napi_transition(vec.index, NapiMode.POLLING)
        self._poll(vec)

    def napi_transition(self, vector: int, mode: NapiMode) -> None:
        vec = self.vectors[vector]
        vec.mode = mode
        vec.idle_polls = 0
        if mode is NapiMode.INTERRUPT:
            vec.irq_raised = False
            self.materialize()
            if self.inbound and not self._arrival_armed:
                self._arm_arrival(self.inbound[0][0])
            pending = [q for q in vec.queues if self.rx_queues[q]]
            if pending:
                self.raise_or_coalesce(pending[0])

    def _poll(self, vec: _Vector) -> None:
        cfg = self.cfg
        vec.polls += 1
        if self.inbound:
            self.materialize()
        found = 0
        busy = False
        budget = cfg.napi_budget
        for q in vec.queues:
            queue = self.rx_queues[q]
            if not queue:
                continue
            if self.rx_busy(q):
                busy = True
                continue
            n = min(budget, len(queue))
            batch = [queue.popleft() for _ in range(n)]
            found += n
            self.rx_handler(q, batch)
            if queue:
                busy = True
        if not cfg.napi_enabled:
            # Plain interrupt servicing: keep going only while work remains.
            if busy or any(self.rx_queues[q] for q in vec.queues):
                self.engine.schedule(self.engine.now + cfg.napi_poll_interval_ns, self.name,
                                     "napi_poll", self._poll, vec)
            else:
                self.napi_transition(vec.index, NapiMode.INTERRUPT)
            return
        if busy or found >= cfg.napi_backlog_threshold:
            vec.idle_polls = 0
        else:
            vec.idle_polls += 1
            if vec.idle_polls >= cfg.napi_exit_idle_polls:
                self.napi_transition(vec.index, NapiMode.INTERRUPT)
                return
        self.engine.schedule(self.engine.now + cfg.napi_poll_interval_ns, self.name, "napi_poll",
                             self._poll, vec)

    # -- bookkeeping ----------------------------------------------------------

    def frames_resident(self) -> int:
        return (sum(len(q) for q in self.tx_queues) + sum(len(q) for q in self.rx_queues)
                + (self.serializing is not None))
