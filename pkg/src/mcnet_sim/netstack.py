"""Host network paths: the kernel stack and the shared-ring fast path.

Stack egress charges syscall, copy and lock contention before the frame
reaches the qdisc of its TX queue; the qdisc feeds the NIC queue whenever it
has room. Stack ingress runs in a per-RX-queue softirq context that handles
one frame at a time, then pays contention, the copy to user space and, if
the consumer sleeps, the wake-up.

The fast path binds a socket to TX-0/RX-0. Egress skips the qdiscs and pays
a doorbell; ingress frames accepted by the filter program go straight into
the RX ring with no copy.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .engine import Engine
from .nic import Nic
from .packet import (NUM_QUEUES, RTPS_PORT, Frame, Path, TrafficClass, classify_filter_program,
                     wire_size)
from .qdisc import MqprioMap, Qdisc, default_tx_queue, make_qdisc

XSK_QUEUE = 0


@dataclass
class StackConfig:
    syscall_ns: int = 2_000
    copy_ns_per_byte: float = 0.3
    softirq_ns: int = 3_000
    wake_ns: int = 5_000
    contention_base_ns: int = 0
    contention_per_inflight_ns: int = 200
    # Jitter is uniform on [0, fraction * load term].
    contention_jitter: float = 0.5
    qdisc: str = "fq_codel"
    qdisc_capacity: int = 1000
    fq_quantum: int = 1514
    socket_backlog: int = 1000
    mqprio: bool = False

    def validate(self) -> None:
        for name in ("syscall_ns", "copy_ns_per_byte", "softirq_ns", "wake_ns",
                     "contention_base_ns", "contention_per_inflight_ns", "contention_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"stack.{name} must be >= 0")
        if self.qdisc not in ("pfifo", "fq_codel"):
            raise ValueError(f"stack.qdisc must be pfifo or fq_codel, got {self.qdisc!r}")
        for name in ("qdisc_capacity", "fq_quantum", "socket_backlog"):
            if getattr(self, name) <= 0:
                raise ValueError(f"stack.{name} must be positive")


@dataclass
class XskConfig:
    ring_size: int = 2048
    doorbell_ns: int = 500
    wake_ns: int = 1_000

    def validate(self) -> None:
        if self.ring_size <= 0:
            raise ValueError("xsk.ring_size must be positive")
        if self.doorbell_ns < 0 or self.wake_ns < 0:
            raise ValueError("xsk costs must be >= 0")


class XskRings:
    """Fill, RX, TX and completion rings of one fast-path socket.

    Descriptors are counted, not addressed; a frame holds exactly one.
    """

    def __init__(self, size: int):
        self.size = size
        self.fill = size
        self.rx: deque[Frame] = deque()
        self.tx_in_use = 0
        self.completed = 0

    def take_fill(self) -> bool:
        if self.fill == 0:
            return False
        self.fill -= 1
        return True

    def recycle_fill(self) -> None:
        self.fill += 1

    def take_tx(self) -> bool:
        if self.tx_in_use >= self.size:
            return False
        self.tx_in_use += 1
        return True

    def complete_tx(self) -> None:
        # Completion entries are reaped at once and the descriptor reused.
        self.tx_in_use -= 1
        self.completed += 1


class _Socket:
    __slots__ = ("port", "consumer", "pending")

    def __init__(self, port: int, consumer):
        self.port = port
        self.consumer = consumer
        self.pending = 0


class NetStack:
    def __init__(self, engine: Engine, host: str, cfg: StackConfig, nic: Nic,
                 fastpath: bool = False, xsk: XskConfig | None = None,
                 mqprio: MqprioMap | None = None, cost_trace: list | None = None):
        cfg.validate()
        self.engine = engine
        self.host = host
        self.cfg = cfg
        self.nic = nic
        self.fastpath = fastpath
        self.xsk_cfg = xsk or XskConfig()
        self.xsk_cfg.validate()
        self.xsk = XskRings(self.xsk_cfg.ring_size) if fastpath else None
        self.mqprio = (mqprio or MqprioMap()) if cfg.mqprio else None
        self.qdiscs: list[Qdisc] = [make_qdisc(cfg.qdisc, cfg.qdisc_capacity, cfg.fq_quantum)
                                    for _ in range(NUM_QUEUES)]
        self.rng = engine.rng(f"{host}:contention")
        self._random = self.rng.random
        self.cost_trace = cost_trace
        self.sockets: dict[int, _Socket] = {}
        self.sleeping: Callable[[], bool] = lambda: False

        self._copy_cost: dict[int, int] = {}
        self._txq_cache: dict[tuple[int, int], int] = {}
        self._rx_busy_until = [0] * NUM_QUEUES
        # Softirq completion instants of best-effort frames, all RX queues.
        self._softirq_backlog: list[int] = []
        self._sink: _Socket | None = None
        self._sink_pending: list[int] = []

        self.tx_submitted = 0
        self.app_delivered = 0
        self.drops: dict[str, int] = {}
        self.tx_stage = 0
        self.rx_stage = 0
        self.be_in_qdisc = 0
        self.xsk_rx_frames = 0
        self.stack_rx_frames = 0

        nic.on_tx_slot = self._refill
        nic.on_tx_complete = self._on_wire
        nic.rx_busy = self._rx_busy
        nic.rx_handler = self._rx_batch

    # -- helpers --------------------------------------------------------------

    def _drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1

    @property
    def dropped(self) -> int:
        return sum(self.drops.values())

    def copy_cost(self, payload_len: int) -> int:
        c = self._copy_cost.get(payload_len)
        if c is None:
            c = self._copy_cost[payload_len] = round(self.cfg.copy_ns_per_byte * wire_size(payload_len))
        return c

    def _trace(self, frame: Frame, stage: str, cost: int) -> None:
        if frame.traffic_class is TrafficClass.REAL_TIME:
            self.cost_trace.append((frame.frame_id, stage, cost))

    def be_inflight(self) -> int:
        """Best-effort frames resident in this host's qdiscs and softirq backlogs."""
        now = self.engine.now
        backlog = self._softirq_backlog
        while backlog and backlog[0] <= now:
            heapq.heappop(backlog)
        return self.be_in_qdisc + len(backlog)

    def contention_delay(self) -> int:
        cfg = self.cfg
        backlog = self._softirq_backlog
        now = self.engine.now
        while backlog and backlog[0] <= now:
            heapq.heappop(backlog)
        load = cfg.contention_per_inflight_ns * (self.be_in_qdisc + len(backlog))
        if load and cfg.contention_jitter:
            load += round(self._random() * cfg.contention_jitter * load)
        return cfg.contention_base_ns + load

    def bind(self, port: int, consumer) -> None:
        """Register ``consumer(frame, wake_ns)`` as the application on ``port``."""
        self.sockets[port] = _Socket(port, consumer)

    def bind_sink(self, port: int) -> None:
        """Register a never-sleeping consumer that only counts frames."""
        self._sink = self.sockets[port] = _Socket(port, None)

    # -- egress -----------------------------------------------------------------

    def tx_queue_for(self, frame: Frame) -> int:
        key = (frame.flow_id, frame.skb_priority)
        q = self._txq_cache.get(key)
        if q is None:
            q = self.mqprio.tx_queue(frame) if self.mqprio is not None else default_tx_queue(frame)
            self._txq_cache[key] = q
        return q

    def stack_tx(self, frame: Frame) -> None:
        if frame.ts_app_send is None:
            raise ValueError("stack_tx requires ts_app_send")
        self.tx_submitted += 1
        self.tx_stage += 1
        cfg = self.cfg
        copy = self.copy_cost(frame.payload_len)
        contention = self.contention_delay()
        if self.cost_trace is not None:
            self._trace(frame, "syscall", cfg.syscall_ns)
            self._trace(frame, "copy", copy)
            self._trace(frame, "contention", contention)
        self.engine.schedule(self.engine.now + cfg.syscall_ns + copy + contention,
                             self.host, "qdisc_enqueue", self._qdisc_enqueue, frame)

    def _qdisc_enqueue(self, frame: Frame) -> None:
        self.tx_stage -= 1
        q = self.tx_queue_for(frame)
        if not self.qdiscs[q].enqueue(frame):
            self._drop("qdisc")
            return
        if frame.traffic_class is TrafficClass.BEST_EFFORT:
            self.be_in_qdisc += 1
        if len(self.nic.tx_queues[q]) < self.nic.capacity:
            self._refill(q)

    def _refill(self, q: int) -> None:
        qdisc = self.qdiscs[q]
        if not len(qdisc):
            return
        nic = self.nic
        nicq = nic.tx_queues[q]
        cap = nic.capacity
        be = TrafficClass.BEST_EFFORT
        while len(qdisc) and len(nicq) < cap:
            frame = qdisc.dequeue()
            if frame.traffic_class is be:
                self.be_in_qdisc -= 1
            nic.enqueue_tx(q, frame)

    def xdp_tx(self, frame: Frame) -> None:
        self.tx_submitted += 1
        if not self.xsk.take_tx():
            self._drop("xsk_tx_ring")
            return
        frame.via_xsk = True
        self.tx_stage += 1
        if self.cost_trace is not None:
            self._trace(frame, "doorbell", self.xsk_cfg.doorbell_ns)
        self.engine.schedule(self.engine.now + self.xsk_cfg.doorbell_ns, self.host, "xsk_doorbell",
                             self._xsk_to_nic, frame)

    def _xsk_to_nic(self, frame: Frame) -> None:
        self.tx_stage -= 1
        if not self.nic.enqueue_tx(XSK_QUEUE, frame):
            self.xsk.complete_tx()

    def _on_wire(self, frame: Frame) -> None:
        if frame.via_xsk and frame.tx_queue == XSK_QUEUE and self.xsk is not None:
            self.xsk.complete_tx()

    # -- ingress ----------------------------------------------------------------

    def _rx_busy(self, q: int) -> bool:
        return self._rx_busy_until[q] > self.engine.now

    def _rx_batch(self, q: int, frames: list[Frame]) -> None:
        """Softirq servicing of one polled batch, frames handled in order."""
        t = max(self.engine.now, self._rx_busy_until[q])
        softirq = self.cfg.softirq_ns
        backlog = self._softirq_backlog
        fast_ok = self.fastpath and q == XSK_QUEUE
        be = TrafficClass.BEST_EFFORT
        for frame in frames:
            if fast_ok and classify_filter_program(frame) is Path.FASTPATH:
                self.xdp_rx(frame, t)
                continue
            t += softirq
            if frame.traffic_class is be:
                heapq.heappush(backlog, t)
            self.stack_rx(frame, t)
        self._rx_busy_until[q] = t

    def xdp_rx(self, frame: Frame, at: int) -> None:
        if not self.xsk.take_fill():
            self._drop("xsk_fill_ring")
            return
        frame.via_xsk = True
        self.xsk.rx.append(frame)
        self.rx_stage += 1
        self.xsk_rx_frames += 1
        self.engine.schedule(at, self.host, "xsk_rx", self._xsk_deliver, frame)

    def _xsk_deliver(self, frame: Frame) -> None:
        head = self.xsk.rx.popleft()
        assert head is frame, "fast-path RX ring reordered"
        self.rx_stage -= 1
        self.app_delivered += 1
        wake = self.xsk_cfg.wake_ns if self.sleeping() else 0
        if self.cost_trace is not None:
            self._trace(frame, "wake", wake)
        self.sockets[RTPS_PORT].consumer(frame, wake)

    def stack_rx(self, frame: Frame, softirq_done: int) -> None:
        # The flag may be left over from the sender's TX path.
        frame.via_xsk = False
        sock = self.sockets.get(frame.dst_port)
        if sock is None:
            self._drop("closed_port")
            return
        if sock.pending >= self.cfg.socket_backlog:
            # Sink deliveries are only accounted when the limit is in question.
            if sock is self._sink:
                self._settle_sink(self.engine.now)
            if sock.pending >= self.cfg.socket_backlog:
                self._drop("socket_backlog")
                return
        sock.pending += 1
        self.rx_stage += 1
        self.stack_rx_frames += 1
        copy = self.copy_cost(frame.payload_len)
        if sock is self._sink:
            # Nothing observes the sink's delivery instant beyond end-of-run
            # accounting, so it skips the contention draw.
            heapq.heappush(self._sink_pending, softirq_done + copy)
            return
        contention = self.contention_delay()
        done = softirq_done + contention + copy
        if self.cost_trace is not None:
            self._trace(frame, "softirq", self.cfg.softirq_ns)
            self._trace(frame, "contention", contention)
            self._trace(frame, "copy", copy)
        self.engine.schedule(done, self.host, "socket_deliver", self._socket_deliver, (sock, frame))

    def _socket_deliver(self, payload) -> None:
        sock, frame = payload
        sock.pending -= 1
        self.rx_stage -= 1
        self.app_delivered += 1
        wake = self.cfg.wake_ns if self.sleeping() else 0
        if self.cost_trace is not None:
            self._trace(frame, "wake", wake)
        sock.consumer(frame, wake)

    def _settle_sink(self, now: int) -> None:
        pending = self._sink_pending
        sock = self._sink
        while pending and pending[0] <= now:
            heapq.heappop(pending)
            sock.pending -= 1
            self.rx_stage -= 1
            self.app_delivered += 1

    def settle(self) -> None:
        """Account sink deliveries that completed by the current instant."""
        if self._sink is not None:
            self._settle_sink(self.engine.now)

    def frames_in_flight(self) -> int:
        """Frames currently held by this host, counted from its structures."""
        return (sum(len(q) for q in self.qdiscs) + self.nic.frames_resident()
                + self.tx_stage + self.rx_stage)
