"""Egress queueing disciplines and the mqprio priority-to-queue map."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .packet import FRAME_OVERHEAD, NUM_QUEUES, Frame, flow_hash


class Qdisc:
    capacity: int

    def enqueue(self, frame: Frame) -> bool:
        raise NotImplementedError

    def dequeue(self) -> Frame | None:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError


class Pfifo(Qdisc):
    """Single tail-drop FIFO."""

    def __init__(self, capacity: int = 1000):
        self.capacity = capacity
        self._q: deque[Frame] = deque()
        self.drops = 0

    def enqueue(self, frame: Frame) -> bool:
        if len(self._q) >= self.capacity:
            self.drops += 1
            return False
        self._q.append(frame)
        return True

    def dequeue(self) -> Frame | None:
        return self._q.popleft() if self._q else None

    def __len__(self) -> int:
        return len(self._q)


class FqCodel(Qdisc):
    """Per-flow fair queueing by deficit round robin.

    The CoDel drop law is not modelled; overflow of the shared ``capacity``
    is a tail drop. Packet cost is the frame size in bytes.
    """

    def __init__(self, capacity: int = 1000, quantum: int = 1514):
        if quantum <= 0:
            raise ValueError("quantum must be positive")
        self.capacity = capacity
        self.quantum = quantum
        self._flows: dict[int, deque[Frame]] = {}
        self._deficit: dict[int, int] = {}
        self._active: deque[int] = deque()
        self._len = 0
        self.drops = 0

    def enqueue(self, frame: Frame) -> bool:
        if self._len >= self.capacity:
            self.drops += 1
            return False
        fid = frame.flow_id
        q = self._flows.get(fid)
        if q is None:
            q = self._flows[fid] = deque()
        if not q:
            self._active.append(fid)
            self._deficit[fid] = 0
        q.append(frame)
        self._len += 1
        return True

    def dequeue(self) -> Frame | None:
        if not self._len:
            return None
        active = self._active
        while True:
            fid = active[0]
            q = self._flows[fid]
            size = q[0].payload_len + FRAME_OVERHEAD
            if self._deficit[fid] < size:
                self._deficit[fid] += self.quantum
                active.rotate(-1)
                continue
            frame = q.popleft()
            self._deficit[fid] -= size
            self._len -= 1
            if not q:
                active.popleft()
                self._deficit[fid] = 0
            return frame

    def __len__(self) -> int:
        return self._len


def make_qdisc(kind: str, capacity: int, quantum: int = 1514) -> Qdisc:
    if kind == "pfifo":
        return Pfifo(capacity)
    if kind == "fq_codel":
        return FqCodel(capacity, quantum)
    raise ValueError(f"unknown qdisc {kind!r}")


@dataclass(frozen=True)
class MqprioMap:
    """skb priority -> traffic class -> hardware TX queue(s).

    Priorities absent from ``prio_to_tc`` fall into ``default_tc``; a class
    owning several queues spreads flows over them by hash.
    """

    prio_to_tc: dict[int, int] = field(default_factory=lambda: {6: 0})
    tc_queues: tuple[tuple[int, ...], ...] = ((0,), (1, 2, 3))
    default_tc: int = 1

    def tx_queue(self, frame: Frame) -> int:
        tc = self.prio_to_tc.get(frame.skb_priority, self.default_tc)
        queues = self.tc_queues[tc]
        if len(queues) == 1:
            return queues[0]
        return queues[flow_hash(frame.flow_id) % len(queues)]


def default_tx_queue(frame: Frame, num_queues: int = NUM_QUEUES) -> int:
    """Queue selection without mqprio: hash over every TX queue."""
    return flow_hash(frame.flow_id) % num_queues
