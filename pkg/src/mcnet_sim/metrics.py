"""Latency samples, statistics, histograms and report emission.

All timestamps come from one simulated clock, so one-way delays need no
clock-offset correction. Statistics are computed on integer nanoseconds and
reported in microseconds; variances are reported in µs².
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

from .engine import NS_PER_US
from .packet import Frame

SAMPLES_HEADER = ["seq", "ts_send_ns", "owd_fwd_ns", "owd_ret_ns", "rtt_ns"]
SUMMARY_HEADER = ["payload", "rtt_max", "owd_max", "rtt_min", "owd_min",
                  "rtt_var", "owd_var", "rtt_med", "owd_med", "interference"]
HIST_BIN_NS = 10 * NS_PER_US


class DuplicateSampleError(RuntimeError):
    pass


class LatencyRecorder:
    """Collects application-level send/receive instants per topic and seq."""

    def __init__(self, topic_fwd: str, topic_ret: str):
        self.topic_fwd = topic_fwd
        self.topic_ret = topic_ret
        # (topic, event) -> list of (seq, t)
        self.events: dict[tuple[str, str], list[tuple[int, int]]] = {
            (t, e): [] for t in (topic_fwd, topic_ret) for e in ("send", "recv")}

    def sent(self, host: str, frame: Frame) -> None:
        log = self.events.get((frame.topic, "send"))
        if log is not None:
            log.append((frame.seq_no, frame.ts_app_send))

    def received(self, host: str, frame: Frame) -> None:
        log = self.events.get((frame.topic, "recv"))
        if log is not None:
            log.append((frame.seq_no, frame.ts_app_recv))


@dataclass(frozen=True)
class LatencySample:
    seq_no: int
    ts_send: int
    ts_recv_fwd: int
    ts_send_ret: int
    ts_recv_ret: int

    @property
    def owd_fwd(self) -> int:
        return self.ts_recv_fwd - self.ts_send

    @property
    def owd_ret(self) -> int:
        return self.ts_recv_ret - self.ts_send_ret

    @property
    def turnaround(self) -> int:
        return self.ts_send_ret - self.ts_recv_fwd

    @property
    def rtt(self) -> int:
        return self.ts_recv_ret - self.ts_send


@dataclass
class MatchResult:
    samples: list[LatencySample]
    incomplete: int
    sent: int


def _index(events: list[tuple[int, int]], what: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for seq, t in events:
        if seq in out:
            raise DuplicateSampleError(f"duplicate seq {seq} in {what}")
        out[seq] = t
    return out


def match_samples(recorder: LatencyRecorder) -> MatchResult:
    """Join ping/pong events by sequence number."""
    ev = recorder.events
    fwd, ret = recorder.topic_fwd, recorder.topic_ret
    send = _index(ev[(fwd, "send")], f"{fwd} send")
    recv_fwd = _index(ev[(fwd, "recv")], f"{fwd} recv")
    send_ret = _index(ev[(ret, "send")], f"{ret} send")
    recv_ret = _index(ev[(ret, "recv")], f"{ret} recv")
    samples = []
    for seq in sorted(send):
        if seq in recv_fwd and seq in send_ret and seq in recv_ret:
            samples.append(LatencySample(seq, send[seq], recv_fwd[seq], send_ret[seq], recv_ret[seq]))
    return MatchResult(samples, len(send) - len(samples), len(send))


@dataclass(frozen=True)
class MetricStats:
    n: int
    min: float
    max: float
    median: float
    variance: float  # µs²

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class StatsSummary:
    n: int
    rtt: MetricStats | None
    owd: MetricStats | None
    owd_ret: MetricStats | None = None
    payload: int | None = None
    interference: bool | None = None
    config: str | None = None
    incomplete: int = 0

    @property
    def empty(self) -> bool:
        return self.n == 0


def describe(values_ns: list[int]) -> MetricStats:
    """min/median/max/population variance of integer-ns values, in µs.

    The median of an even count is the lower middle element. The variance
    is computed exactly with integer sums before the single division.
    """
    n = len(values_ns)
    if n == 0:
        raise ValueError("describe() needs at least one value")
    ordered = sorted(values_ns)
    s = sum(ordered)
    ss = sum(v * v for v in ordered)
    var_ns2 = (n * ss - s * s) / (n * n)
    return MetricStats(
        n=n,
        min=ordered[0] / NS_PER_US,
        max=ordered[-1] / NS_PER_US,
        median=ordered[(n - 1) // 2] / NS_PER_US,
        variance=var_ns2 / (NS_PER_US * NS_PER_US),
    )


def summarize(samples: list[LatencySample], *, payload: int | None = None,
              interference: bool | None = None, config: str | None = None,
              incomplete: int = 0) -> StatsSummary:
    if not samples:
        return StatsSummary(0, None, None, None, payload, interference, config, incomplete)
    return StatsSummary(
        n=len(samples),
        rtt=describe([s.rtt for s in samples]),
        owd=describe([s.owd_fwd for s in samples]),
        owd_ret=describe([s.owd_ret for s in samples]),
        payload=payload,
        interference=interference,
        config=config,
        incomplete=incomplete,
    )


@dataclass
class Histogram:
    bin_width_ns: int = HIST_BIN_NS
    bins: dict[int, int] = field(default_factory=dict)
    underflow: int = 0
    overflow: int = 0
    upper_ns: int | None = None

    @property
    def total(self) -> int:
        return sum(self.bins.values()) + self.underflow + self.overflow

    def rows(self) -> list[tuple[float, int]]:
        if not self.bins:
            return []
        lo, hi = min(self.bins), max(self.bins)
        return [(b * self.bin_width_ns / NS_PER_US, self.bins.get(b, 0)) for b in range(lo, hi + 1)]


def histogram(samples: list[LatencySample], metric: str = "rtt",
              bin_width_ns: int = HIST_BIN_NS, upper_ns: int | None = None) -> Histogram:
    """Half-open bins: a value v lands in bin floor(v / width)."""
    getter = {"rtt": lambda s: s.rtt, "owd": lambda s: s.owd_fwd,
              "owd_ret": lambda s: s.owd_ret}[metric]
    h = Histogram(bin_width_ns, upper_ns=upper_ns)
    for s in samples:
        v = getter(s)
        if v < 0:
            h.underflow += 1
        elif upper_ns is not None and v >= upper_ns:
            h.overflow += 1
        else:
            b = v // bin_width_ns
            h.bins[b] = h.bins.get(b, 0) + 1
    return h


@dataclass
class ComparisonReport:
    variance_ratio: float
    max_ratio: float
    median_ratio: float
    verdicts: dict[str, bool] = field(default_factory=dict)

    @staticmethod
    def fmt(x: float) -> str:
        return "inf" if math.isinf(x) else f"{x:.4g}"


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def compare_runs(a: MetricStats, b: MetricStats,
                 thresholds: dict[str, float] | None = None) -> ComparisonReport:
    """Ratios a/b of variance, max and median; thresholds are lower bounds on a ratio.

    ``thresholds`` maps ``"variance_ratio" | "max_ratio" | "median_ratio"``
    to the minimum ratio that passes.
    """
    rep = ComparisonReport(_ratio(a.variance, b.variance), _ratio(a.max, b.max),
                           _ratio(a.median, b.median))
    for name, bound in (thresholds or {}).items():
        rep.verdicts[name] = getattr(rep, name) >= bound
    return rep


# -- emission -----------------------------------------------------------------

def samples_csv(samples: list[LatencySample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLES_HEADER)
    for s in samples:
        w.writerow([s.seq_no, s.ts_send, s.owd_fwd, s.owd_ret, s.rtt])
    return buf.getvalue()


def _num(x: float) -> str:
    return f"{x:.2f}"


def summary_row(summary: StatsSummary) -> list[str]:
    interf = "on" if summary.interference else "off"
    if summary.empty:
        return [str(summary.payload)] + ["no data"] * 8 + [interf]
    r, o = summary.rtt, summary.owd
    return [str(summary.payload), _num(r.max), _num(o.max), _num(r.min), _num(o.min),
            _num(r.variance), _num(o.variance), _num(r.median), _num(o.median), interf]


def summary_csv(summaries: list[StatsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        w.writerow(summary_row(s))
    return buf.getvalue()


def read_summary_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != SUMMARY_HEADER:
        raise ValueError(f"{path}: unexpected header {list(rows[0].keys())}")
    return rows


def histogram_csv(h: Histogram) -> str:
    lines = ["bin_lo_us,count"]
    lines += [f"{lo:g},{count}" for lo, count in h.rows()]
    if h.underflow:
        lines.append(f"underflow,{h.underflow}")
    if h.overflow:
        lines.append(f"overflow,{h.overflow}")
    return "\n".join(lines) + "\n"


def report_md(rows: list[tuple[str, StatsSummary]], verdicts: list[tuple[str, bool, str]] = (),
              title: str = "Latency report") -> str:
    """Markdown table in the column order of the summary CSV, one row per run."""
    out = [f"# {title}", "",
           "Times in µs. `var` columns are population variance in µs² (÷n); "
           "`std` is its square root in µs. OWD is the forward (ping) direction. "
           "Medians of even-sized sets take the lower middle element.", ""]
    head = ["config", "payload", "RTT max", "OWD max", "RTT min", "OWD min", "RTT var (µs²)",
            "OWD var (µs²)", "RTT std", "OWD std", "RTT med", "OWD med", "interf", "n", "lost"]
    out.append("| " + " | ".join(head) + " |")
    out.append("|" + "---|" * len(head))
    for config, s in rows:
        interf = "on" if s.interference else "off"
        if s.empty:
            cells = [config, f"{s.payload}B"] + ["no data"] * 10 + [interf, "0", str(s.incomplete)]
        else:
            r, o = s.rtt, s.owd
            cells = [config, f"{s.payload}B", _num(r.max), _num(o.max), _num(r.min), _num(o.min),
                     _num(r.variance), _num(o.variance), _num(r.std), _num(o.std),
                     _num(r.median), _num(o.median), interf, str(s.n), str(s.incomplete)]
        out.append("| " + " | ".join(cells) + " |")
    if verdicts:
        out += ["", "## Checks", "", "| check | verdict | detail |", "|---|---|---|"]
        for name, ok, detail in verdicts:
            out.append(f"| {name} | {'PASS' if ok else 'FAIL'} | {detail} |")
    return "\n".join(out) + "\n"
