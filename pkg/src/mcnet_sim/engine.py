"""Deterministic discrete-event engine.

Time is an integer count of nanoseconds. Events are ordered by
``(fire_at, seq)`` where ``seq`` is a global insertion counter, so two runs
that schedule the same events in the same order dispatch them identically.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, TextIO

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SimulationError(RuntimeError):
    """A model bug detected at run time (e.g. scheduling into the past)."""


class SimEvent(NamedTuple):
    fire_at: int
    seq: int
    target: str
    kind: str
    payload: Any = None


@dataclass
class RunStats:
    dispatched: int = 0
    per_kind: Counter = field(default_factory=Counter)
    pending: int = 0


def derive_seed(seed: int, stream_id: str) -> int:
    """Map ``(seed, stream_id)`` to an independent 64-bit seed.

    Uses SHA-256 so the mapping is identical on every platform and Python
    version (``hash()`` of a str is salted per process).
    """
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream(random.Random):
    """Seeded pseudo-random stream, one per stochastic component."""

    def __new__(cls, seed: int, stream_id: str):
        # The C base type only accepts a single seed argument.
        return super().__new__(cls, derive_seed(seed, stream_id))

    def __init__(self, seed: int, stream_id: str):
        self.base_seed = seed
        self.stream_id = stream_id
        super().__init__(derive_seed(seed, stream_id))


class Engine:
    """Single-threaded event loop over a binary heap.

    Heap entries are plain tuples ``(fire_at, seq, target, kind, fn, payload)``;
    ``seq`` is unique so comparison never reaches the callable.
    """

    def __init__(self, seed: int = 0, trace: TextIO | None = None, count_kinds: bool = False):
        self.seed = seed
        # Per-kind counts cost a dict update per event; off unless asked for.
        self.count_kinds = count_kinds
        self.now = 0
        self._seq = 0
        self._heap: list[tuple] = []
        self._streams: dict[str, RngStream] = {}
        self._trace = trace
        self.end: int | None = None
        self._frame_ids = 0

    def rng(self, stream_id: str) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return stream

    def next_frame_id(self) -> int:
        self._frame_ids += 1
        return self._frame_ids

    def schedule(self, fire_at: int, target: str, kind: str,
                 fn: Callable[[Any], None], payload: Any = None) -> int:
        if fire_at < self.now:
            raise SimulationError(
                f"event in the past: {target}/{kind} at {fire_at} ns, now={self.now} ns")
        seq = self._seq
        self._seq = seq + 1
        heapq.heappush(self._heap, (fire_at, seq, target, kind, fn, payload))
        return seq

    def after(self, delay: int, target: str, kind: str,
              fn: Callable[[Any], None], payload: Any = None) -> int:
        return self.schedule(self.now + delay, target, kind, fn, payload)

    def pending(self) -> list[SimEvent]:
        return [SimEvent(e[0], e[1], e[2], e[3], e[5]) for e in sorted(self._heap)]

    def __len__(self) -> int:
        return len(self._heap)

    def run_until(self, end: int) -> RunStats:
        """Dispatch every event with ``fire_at <= end``; leave the clock at ``end``."""
        if end < self.now:
            raise SimulationError(f"run_until({end}) is before now={self.now}")
        self.end = end
        stats = RunStats()
        heap = self._heap
        pop = heapq.heappop
        trace = self._trace
        n = 0
        if trace is None and not self.count_kinds:
            while heap and heap[0][0] <= end:
                fire_at, _, _, _, fn, payload = pop(heap)
                self.now = fire_at
                fn(payload)
                n += 1
        else:
            per_kind = stats.per_kind
            while heap and heap[0][0] <= end:
                fire_at, seq, target, kind, fn, payload = pop(heap)
                self.now = fire_at
                per_kind[kind] += 1
                if trace is not None:
                    trace.write(f"{fire_at},{seq},{target},{kind}\n")
                fn(payload)
                n += 1
        self.now = end
        stats.dispatched = n
        stats.pending = len(heap)
        return stats
