"""Independent reference implementations used as test oracles.

Each is written from the definition, deliberately naive, and shares no code
with the package under test.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction


def two_pass_stats(values_ns: list[int]) -> dict[str, float]:
    """min/median(lower middle)/max in µs and population variance in µs², two-pass."""
    xs = [Fraction(v, 1000) for v in values_ns]
    n = len(xs)
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / n
    ordered = sorted(xs)
    return {"min": float(ordered[0]), "max": float(ordered[-1]),
            "median": float(ordered[(n - 1) // 2]), "variance": float(var)}


def min_nonempty_index(occupancy: list[int]) -> int | None:
    best = None
    for i in range(len(occupancy) - 1, -1, -1):
        if occupancy[i] > 0:
            best = i
    return best


def np_fixed_priority_schedule(ops: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Brute-force non-preemptive fixed-priority schedule.

    ``ops`` are (release, priority_rank, cost) with rank 0 highest; ties in
    rank are served FIFO: earlier release first, then list order. Returns
    (index, start, finish) in execution order. Time advances one step at a
    time from 0, checking every instant.
    """
    pending = set(range(len(ops)))
    out = []
    t = 0
    busy_until = 0
    while pending:
        if t >= busy_until:
            ready = [i for i in pending if ops[i][0] <= t]
            if ready:
                i = min(ready, key=lambda k: (ops[k][1], ops[k][0], k))
                pending.remove(i)
                out.append((i, t, t + ops[i][2]))
                busy_until = t + ops[i][2]
                t = busy_until
                continue
        t += 1
    return out


def drr_reference(packets: list[tuple[int, int]], quantum: int) -> list[int]:
    """Deficit round robin over flows, all packets present at t=0.

    ``packets`` are (flow_id, size) in arrival order. Returns the indices of
    packets in dequeue order. Flows enter the round in order of first arrival.
    """
    flows: dict[int, deque[int]] = {}
    order: list[int] = []
    for idx, (fid, _) in enumerate(packets):
        if fid not in flows:
            flows[fid] = deque()
            order.append(fid)
        flows[fid].append(idx)
    deficit = {f: 0 for f in order}
    out = []
    active = deque(order)
    while active:
        f = active.popleft()
        deficit[f] += quantum
        q = flows[f]
        while q and packets[q[0]][1] <= deficit[f]:
            i = q.popleft()
            deficit[f] -= packets[i][1]
            out.append(i)
        if q:
            active.append(f)
        else:
            deficit[f] = 0
    return out
