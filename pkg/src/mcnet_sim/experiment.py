"""Two-host topology, run orchestration, run-time invariant checks and artifact output."""

from __future__ import annotations

import bisect
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

from . import metrics
from .config import CONFIGS, PAYLOADS, ScenarioConfig, build_config
from .engine import Engine, RunStats
from .middleware import Middleware, OperationKind, PendingOp
from .netstack import NetStack
from .nic import Nic
from .packet import IPERF_PORT, NUM_QUEUES, RTPS_PORT, Frame, TrafficClass
from .workload import (PING_FLOW, PING_TOPIC, PONG_FLOW, PONG_TOPIC, InterferenceGenerator,
                       RtEcho, RtSender)

log = logging.getLogger(__name__)

ARTIFACTS = ("samples.csv", "summary.csv", "hist_rtt.csv", "hist_owd.csv", "report.md")

# Flow-id layout: keeps every flow hash and phase distinct across hosts.
META_FLOW = {"A": 3, "B": 4}
BE_FIRST_FLOW = {"A": 100, "B": 200}


@dataclass
class Host:
    name: str
    nic: Nic
    stack: NetStack
    mw: Middleware
    interference: InterferenceGenerator | None = None

    def conservation(self) -> tuple[int, int, int]:
        """(frames in, frames out, frames held) for this host."""
        nic, stack = self.nic, self.stack
        frames_in = stack.tx_submitted + nic.wire_rx
        frames_out = (nic.wire_tx + stack.app_delivered + stack.dropped
                      + sum(nic.tx_drops) + sum(nic.rx_drops))
        return frames_in, frames_out, stack.frames_in_flight()


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class RunResult:
    cfg: ScenarioConfig
    summary: metrics.StatsSummary
    match: metrics.MatchResult
    hosts: dict[str, Host]
    stats: RunStats
    checks: list[Check] = field(default_factory=list)
    wall_s: float = 0.0
    cost_trace: list | None = None

    @property
    def samples(self) -> list[metrics.LatencySample]:
        return self.match.samples

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]


def build_host(engine: Engine, name: str, cfg: ScenarioConfig, recorder,
               cost_trace: list | None, record_occupancy: bool) -> Host:
    nic = Nic(engine, f"{name}.nic", cfg.nic_config(record_occupancy))
    fastpath = cfg["fastpath"]
    stack = NetStack(engine, name, cfg.stack_config(), nic, fastpath=fastpath,
                     xsk=cfg.xsk_config(), cost_trace=cost_trace)
    mw = Middleware(engine, name, cfg.middleware_config(), recorder)
    mw._meta_flow = META_FLOW[name]
    mw.user_egress = stack.xdp_tx if fastpath else stack.stack_tx
    mw.meta_egress = stack.stack_tx
    if fastpath:
        xsk = stack.xsk

        def rx_done(frame: Frame) -> None:
            if frame.via_xsk:
                xsk.recycle_fill()
        mw.on_rx_done = rx_done
    stack.sleeping = lambda: mw.executor.suspended
    stack.bind(RTPS_PORT, mw.receive)
    stack.bind_sink(IPERF_PORT)
    return Host(name, nic, stack, mw)


def build_topology(engine: Engine, cfg: ScenarioConfig, recorder,
                   cost_trace: list | None = None,
                   record_occupancy: bool = False) -> tuple[Host, Host, RtSender, RtEcho]:
    a = build_host(engine, "A", cfg, recorder, cost_trace, record_occupancy)
    b = build_host(engine, "B", cfg, recorder, cost_trace, record_occupancy)
    a.nic.peer, b.nic.peer = b.nic, a.nic
    rt = cfg.rt_config()
    sender = RtSender(engine, a.mw, rt)
    echo = RtEcho(b.mw, rt)
    a.mw.add_publisher(PING_TOPIC, PING_FLOW)
    a.mw.add_subscriber(PONG_TOPIC)
    b.mw.add_publisher(PONG_TOPIC, PONG_FLOW)
    b.mw.add_subscriber(PING_TOPIC, echo.rt_echo)
    icfg = cfg.interference_config()
    for host in (a, b) if icfg.bidirectional else (a,):
        host.interference = InterferenceGenerator(engine, host.name, host.stack, icfg,
                                                  BE_FIRST_FLOW[host.name], cfg.duration_ns, cfg.seed)
    return a, b, sender, echo


# -- invariant checks -------------------------------------------------------------

def check_conservation(host: Host) -> Check:
    fin, fout, held = host.conservation()
    return Check(f"conservation[{host.name}]", fin == fout + held,
                 f"in={fin} out={fout} held={held}")


def check_decomposition(samples: list[metrics.LatencySample]) -> Check:
    bad = [s.seq_no for s in samples if s.rtt != s.owd_fwd + s.turnaround + s.owd_ret]
    return Check("rtt_decomposition", not bad, f"{len(samples)} samples, {len(bad)} mismatched")


def check_histograms(samples, hists: dict[str, metrics.Histogram]) -> Check:
    bad = {k: h.total for k, h in hists.items() if h.total != len(samples)}
    return Check("histogram_conservation", not bad, f"n={len(samples)} mismatched={bad}")


def check_steering(hosts: list[Host]) -> Check:
    stray = {}
    for h in hosts:
        for side, counter in (("tx", h.nic.rt_tx_queues), ("rx", h.nic.rt_rx_queues)):
            for q in range(1, NUM_QUEUES):
                if counter[q]:
                    stray[f"{h.name}.{side}{q}"] = counter[q]
    return Check("rt_steering", not stray, f"stray real-time frames: {stray or 'none'}")


def executor_log_problems(ops: list[PendingOp], order: tuple[OperationKind, ...]) -> list[str]:
    """Check a completed schedule against non-preemptive fixed-priority rules.

    Verified per op: it starts at or after release, does not overlap its
    predecessor, starts at release when the executor was idle, no waiting
    higher-priority op was overlooked, FIFO within a kind, and the top kind
    waits at most the remaining cost of the op in flight at its release.
    """
    problems: list[str] = []
    rank = {k: i for i, k in enumerate(order)}
    ops = sorted(ops, key=lambda o: o.start)
    by_kind: dict[OperationKind, list[PendingOp]] = {k: [] for k in order}
    for op in ops:
        by_kind[op.kind].append(op)
    starts = {k: [o.start for o in v] for k, v in by_kind.items()}
    prev = None
    for op in ops:
        if op.start < op.release_time:
            problems.append(f"op {op.op_id} starts before release")
        if op.finish != op.start + op.exec_cost:
            problems.append(f"op {op.op_id} finish != start + cost")
        if prev is not None:
            if op.start < prev.finish:
                problems.append(f"op {op.op_id} overlaps op {prev.op_id}")
            elif op.start > prev.finish and op.start != op.release_time:
                problems.append(f"op {op.op_id} delayed while executor idle")
        for kind in order[:rank[op.kind]]:
            i = bisect.bisect_right(starts[kind], op.start)
            if i < len(starts[kind]) and by_kind[kind][i].release_time < op.start:
                problems.append(f"op {op.op_id} ({op.kind.name}) dispatched over waiting "
                                f"{kind.name} op {by_kind[kind][i].op_id}")
        prev = op
        if len(problems) > 20:
            break
    for kind, seq in by_kind.items():
        ids = [o.op_id for o in seq]
        if ids != sorted(ids):
            problems.append(f"{kind.name} not FIFO")
    for op in by_kind[order[0]]:
        if op.queued_same_kind == 0 and op.start - op.release_time > op.blocking_remaining:
            problems.append(f"top-priority op {op.op_id} blocked {op.start - op.release_time} ns "
                            f"> remaining {op.blocking_remaining} ns")
            break
    return problems


def check_executor(host: Host) -> Check:
    ex = host.mw.executor
    ops = list(ex.log or [])
    problems = executor_log_problems(ops, ex.priority_order)
    return Check(f"executor_schedule[{host.name}]", not problems,
                 f"{len(ops)} ops" + (f"; {problems[0]}" if problems else ""))


def check_sends(cfg: ScenarioConfig, match: metrics.MatchResult) -> Check:
    want = cfg.rt_config().sends
    return Check("send_count", match.sent == want, f"sent={match.sent} expected={want}")


# -- orchestration ----------------------------------------------------------------

def run_experiment(cfg: ScenarioConfig, out_dir: str | Path | None = None, *,
                   trace: TextIO | None = None, cost_trace: bool = False,
                   record_occupancy: bool = False) -> RunResult:
    """Simulate one scenario; write artifacts when ``out_dir`` is given.

    The run covers ``duration_s`` of sends plus ``drain_s`` so late replies
    land. With ``cfg['trace']`` on and no explicit stream, the event trace
    goes to ``trace.csv`` in the output directory.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    own_trace = None
    if trace is None and cfg["trace"] and out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trace = own_trace = open(out / "trace.csv", "w")
    try:
        engine = Engine(cfg.seed, trace)
        recorder = metrics.LatencyRecorder(PING_TOPIC, PONG_TOPIC)
        ctrace = [] if cost_trace else None
        a, b, sender, _ = build_topology(engine, cfg, recorder, ctrace, record_occupancy)
        sender.start()
        for host in (a, b):
            host.mw.start_housekeeping(cfg.duration_ns)
            if host.interference is not None:
                host.interference.start()
        stats = engine.run_until(cfg.duration_ns + cfg.drain_ns)
    finally:
        if own_trace is not None:
            own_trace.close()
    for host in (a, b):
        host.stack.settle()

    match = metrics.match_samples(recorder)
    summary = metrics.summarize(match.samples, payload=cfg.payload, interference=cfg.interference,
                                config=cfg.config, incomplete=match.incomplete)
    hists = {m: metrics.histogram(match.samples, m) for m in ("rtt", "owd")}
    result = RunResult(cfg, summary, match, {"A": a, "B": b}, stats, cost_trace=ctrace)
    result.checks = [check_sends(cfg, match), check_conservation(a), check_conservation(b),
                     check_decomposition(match.samples), check_histograms(match.samples, hists),
                     check_executor(a), check_executor(b)]
    if cfg.config == "isolated":
        result.checks.append(check_steering([a, b]))
    result.wall_s = time.perf_counter() - t0
    log.info("%s: %d events, %d samples, %.1f s wall", cfg.label(), stats.dispatched,
             summary.n, result.wall_s)
    if out is not None:
        write_artifacts(result, hists, out)
    return result


def write_artifacts(result: RunResult, hists: dict[str, metrics.Histogram], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "samples.csv").write_text(metrics.samples_csv(result.samples))
    (out / "summary.csv").write_text(metrics.summary_csv([result.summary]))
    for m, h in hists.items():
        (out / f"hist_{m}.csv").write_text(metrics.histogram_csv(h))
    verdicts = [(c.name, c.ok, c.detail) for c in result.checks]
    (out / "report.md").write_text(
        metrics.report_md([(result.cfg.config, result.summary)], verdicts,
                          title=f"Latency report: {result.cfg.label()}")
        + counters_md(result))
    (out / "scenario.txt").write_text(result.cfg.to_text())


def counters_md(result: RunResult) -> str:
    lines = ["", "## Counters", "", "| host | wire tx | wire rx | delivered | stack drops | "
             "nic tx drops | nic rx drops | interrupts | polls |", "|---|---|---|---|---|---|---|---|---|"]
    for h in result.hosts.values():
        nic, st = h.nic, h.stack
        lines.append(f"| {h.name} | {nic.wire_tx} | {nic.wire_rx} | {st.app_delivered} | "
                     f"{dict(sorted(st.drops.items())) or 0} | {sum(nic.tx_drops)} | {sum(nic.rx_drops)} | "
                     f"{sum(v.interrupts for v in nic.vectors)} | {sum(v.polls for v in nic.vectors)} |")
    lines += ["", f"Events dispatched: {result.stats.dispatched}. Wall time: {result.wall_s:.1f} s."]
    return "\n".join(lines) + "\n"


def sweep_grid(base: dict[str, str] | None = None,
               configs: tuple[str, ...] | None = None) -> list[ScenarioConfig]:
    """The 2 configurations x 3 payloads x interference off/on grid."""
    base = dict(base or {})
    grid = []
    for config in configs or CONFIGS:
        for payload in PAYLOADS[::-1]:
            for interference in ("off", "on"):
                raw = {k: v for k, v in base.items()
                       if k not in ("config", "payload", "interference")}
                raw.update(config=config, payload=str(payload), interference=interference)
                grid.append(build_config(raw))
    return grid


def sweep(out_dir: str | Path, base: dict[str, str] | None = None,
          configs: tuple[str, ...] | None = None) -> list[RunResult]:
    """Run the full grid; write per-run artifacts and per-configuration summaries.

    Layout: ``<out>/<config>/<label>/`` per run, ``<out>/<config>/summary.csv``
    with that configuration's six rows, and a combined ``<out>/report.md``.
    """
    out = Path(out_dir)
    results = []
    for cfg in sweep_grid(base, configs):
        results.append(run_experiment(cfg, out / cfg.config / cfg.label()))
    for config in configs or CONFIGS:
        rows = [r.summary for r in results if r.cfg.config == config]
        (out / config).mkdir(parents=True, exist_ok=True)
        (out / config / "summary.csv").write_text(metrics.summary_csv(rows))
    verdicts = [(f"{r.cfg.label()}: {c.name}", c.ok, c.detail) for r in results for c in r.failed()]
    (out / "report.md").write_text(metrics.report_md(
        [(r.cfg.config, r.summary) for r in results], verdicts, title="Latency sweep"))
    return results


def trace_text(cfg: ScenarioConfig) -> tuple[str, RunResult]:
    """Run without writing files; return the event trace and the result."""
    buf = io.StringIO()
    result = run_experiment(cfg, trace=buf)
    return buf.getvalue(), result
