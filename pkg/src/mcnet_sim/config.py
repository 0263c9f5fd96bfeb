"""Scenario configuration: flat ``section.key=value`` files with presets.

A scenario picks ``config=baseline`` or ``config=isolated``; the preset then
fills every mechanism switch. Explicit settings that contradict the preset
are rejected at load time rather than silently producing a hybrid.

File format: one ``key=value`` per line, ``#`` starts a comment, blank lines
are ignored, keys may repeat only if their values agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

from .engine import NS_PER_MS, NS_PER_S, NS_PER_US
from .middleware import DEFAULT_PRIORITY_ORDER, MiddlewareConfig, OperationKind
from .netstack import StackConfig, XskConfig
from .nic import NicConfig
from .packet import DEFAULT_RT_PCP, FilterTable
from .workload import InterferenceConfig, RtWorkloadConfig

PAYLOADS = (64, 512, 1024)
CONFIGS = ("baseline", "isolated")


class ConfigError(ValueError):
    """Invalid scenario; carries one message per offending field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "on", "yes"):
        return True
    if s in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


def _int(v: str) -> int:
    return int(v.strip().replace("_", ""))


def _float(v: str) -> float:
    return float(v.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(v: str) -> str:
        s = v.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return s
    return parse


def _priority_order(v: str) -> tuple[OperationKind, ...]:
    names = [x.strip().upper() for x in v.split(",") if x.strip()]
    try:
        order = tuple(OperationKind[n] for n in names)
    except KeyError as exc:
        raise ValueError(f"unknown operation kind {exc.args[0]}") from None
    if sorted(names) != sorted(k.name for k in OperationKind):
        raise ValueError("must list every operation kind exactly once")
    return order


# key -> (parser, default or None when set by the preset)
KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "config": (_choice(*CONFIGS), "isolated"),
    "payload": (_int, 1024),
    "interference": (_bool, False),
    "duration_s": (_float, 10.0),
    "drain_s": (_float, 0.1),
    "seed": (_int, 1),
    "output_dir": (str, "out"),
    "fastpath": (_bool, None),
    "trace": (_bool, False),
    "rt.period_us": (_int, 500),
    "interference.flows": (_int, 50),
    "interference.aggregate_bps": (_int, 2_500_000_000),
    "interference.bidirectional": (_bool, True),
    "stack.syscall_ns": (_int, 2_000),
    "stack.copy_ns_per_byte": (_float, 0.3),
    "stack.softirq_ns": (_int, 3_000),
    "stack.wake_ns": (_int, 5_000),
    "stack.contention_base_ns": (_int, 0),
    "stack.contention_per_inflight_ns": (_int, 200),
    "stack.contention_jitter": (_float, 0.5),
    "stack.qdisc": (_choice("pfifo", "fq_codel"), None),
    "stack.qdisc_capacity": (_int, 1000),
    "stack.fq_quantum": (_int, 1514),
    "stack.socket_backlog": (_int, 1000),
    "stack.mqprio": (_bool, None),
    "xsk.ring_size": (_int, 2048),
    "xsk.doorbell_ns": (_int, 500),
    "xsk.wake_ns": (_int, 1_000),
    "nic.queue_capacity": (_int, 256),
    "nic.line_rate_bps": (_int, 2_500_000_000),
    "nic.propagation_ns": (_int, 100),
    "nic.coalescing_us": (_int, None),
    "nic.coalescing_frames": (_int, 0),
    "nic.napi": (_bool, True),
    "nic.napi_budget": (_int, 64),
    "nic.napi_poll_interval_ns": (_int, 20_000),
    "nic.napi_exit_idle_polls": (_int, 2),
    "nic.napi_backlog_threshold": (_int, 1),
    "nic.irq_latency_ns": (_int, 30_000),
    "nic.rx_vectors": (_int, 1),
    "nic.ntuple": (_bool, None),
    "nic.rt_pcp": (_int, DEFAULT_RT_PCP),
    "nic.tsn_shaper": (_bool, False),
    "mw.priority_order": (_priority_order, DEFAULT_PRIORITY_ORDER),
    "mw.user_cost_min_ns": (_int, 2_000),
    "mw.user_cost_max_ns": (_int, 6_000),
    "mw.housekeeping_cost_min_ns": (_int, 5_000),
    "mw.housekeeping_cost_max_ns": (_int, 20_000),
    "mw.discovery_period_ms": (_float, 100.0),
    "mw.liveliness_period_ms": (_float, 1000.0),
    "mw.meta_rx_rate_hz": (_float, 0.0),
}

PRESETS: dict[str, dict[str, Any]] = {
    "isolated": {"fastpath": True, "nic.ntuple": True, "stack.mqprio": True,
                 "stack.qdisc": "pfifo", "nic.coalescing_us": 0},
    "baseline": {"fastpath": False, "nic.ntuple": False, "stack.mqprio": False,
                 "stack.qdisc": "fq_codel", "nic.coalescing_us": 50},
}

# Baseline leaves the driver default for coalescing, so only the isolated
# preset pins it.
_PINNED = {
    "isolated": ("fastpath", "nic.ntuple", "stack.mqprio", "stack.qdisc", "nic.coalescing_us"),
    "baseline": ("fastpath", "nic.ntuple", "stack.mqprio", "stack.qdisc"),
}


@dataclass
class ScenarioConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def config(self) -> str:
        return self.values["config"]

    @property
    def payload(self) -> int:
        return self.values["payload"]

    @property
    def interference(self) -> bool:
        return self.values["interference"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def duration_ns(self) -> int:
        return round(self.values["duration_s"] * NS_PER_S)

    @property
    def drain_ns(self) -> int:
        return round(self.values["drain_s"] * NS_PER_S)

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output_dir"])

    def label(self) -> str:
        return f"{self.config}_{self.payload}B_{'on' if self.interference else 'off'}"

    # -- component configs ----------------------------------------------------

    def stack_config(self) -> StackConfig:
        v = self.values
        return StackConfig(
            syscall_ns=v["stack.syscall_ns"], copy_ns_per_byte=v["stack.copy_ns_per_byte"],
            softirq_ns=v["stack.softirq_ns"], wake_ns=v["stack.wake_ns"],
            contention_base_ns=v["stack.contention_base_ns"],
            contention_per_inflight_ns=v["stack.contention_per_inflight_ns"],
            contention_jitter=v["stack.contention_jitter"], qdisc=v["stack.qdisc"],
            qdisc_capacity=v["stack.qdisc_capacity"], fq_quantum=v["stack.fq_quantum"],
            socket_backlog=v["stack.socket_backlog"], mqprio=v["stack.mqprio"])

    def xsk_config(self) -> XskConfig:
        v = self.values
        return XskConfig(v["xsk.ring_size"], v["xsk.doorbell_ns"], v["xsk.wake_ns"])

    def nic_config(self, record_occupancy: bool = False) -> NicConfig:
        v = self.values
        filters = FilterTable.real_time(v["nic.rt_pcp"]) if v["nic.ntuple"] else FilterTable()
        return NicConfig(
            queue_capacity=v["nic.queue_capacity"], line_rate_bps=v["nic.line_rate_bps"],
            propagation_ns=v["nic.propagation_ns"], coalescing_us=v["nic.coalescing_us"],
            coalescing_frames=v["nic.coalescing_frames"], napi_enabled=v["nic.napi"],
            napi_budget=v["nic.napi_budget"], napi_poll_interval_ns=v["nic.napi_poll_interval_ns"],
            napi_exit_idle_polls=v["nic.napi_exit_idle_polls"],
            napi_backlog_threshold=v["nic.napi_backlog_threshold"],
            irq_latency_ns=v["nic.irq_latency_ns"], rx_vectors=v["nic.rx_vectors"],
            filter_table=filters, tsn_shaper=v["nic.tsn_shaper"],
            record_occupancy=record_occupancy)

    def middleware_config(self) -> MiddlewareConfig:
        v = self.values
        return MiddlewareConfig(
            priority_order=v["mw.priority_order"],
            user_cost_ns=(v["mw.user_cost_min_ns"], v["mw.user_cost_max_ns"]),
            housekeeping_cost_ns=(v["mw.housekeeping_cost_min_ns"], v["mw.housekeeping_cost_max_ns"]),
            discovery_period_ns=round(v["mw.discovery_period_ms"] * NS_PER_MS),
            liveliness_period_ns=round(v["mw.liveliness_period_ms"] * NS_PER_MS),
            meta_rx_rate_hz=v["mw.meta_rx_rate_hz"], rt_pcp=v["nic.rt_pcp"])

    def rt_config(self) -> RtWorkloadConfig:
        return RtWorkloadConfig(period_ns=self.values["rt.period_us"] * NS_PER_US,
                                payload_len=self.payload, duration_ns=self.duration_ns)

    def interference_config(self) -> InterferenceConfig:
        v = self.values
        return InterferenceConfig(enabled=v["interference"], n_flows=v["interference.flows"],
                                  bidirectional=v["interference.bidirectional"],
                                  aggregate_target_bps=v["interference.aggregate_bps"],
                                  payload_len=self.payload)

    def to_text(self) -> str:
        lines = []
        for key in KEYS:
            val = self.values[key]
            if isinstance(val, bool):
                val = "on" if val else "off"
            elif key == "mw.priority_order":
                val = ",".join(k.name for k in val)
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"


def parse_text(text: str, origin: str = "<text>") -> dict[str, str]:
    raw: dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{origin}:{lineno}: expected key=value, got {line!r}")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw and raw[key] != value:
            problems.append(f"{origin}:{lineno}: {key} set twice with different values")
        raw[key] = value
    if problems:
        raise ConfigError(problems)
    return raw


def build_config(raw: dict[str, str]) -> ScenarioConfig:
    """Parse, apply the preset and validate every field."""
    problems = []
    parsed: dict[str, Any] = {}
    for key, text in raw.items():
        if key not in KEYS:
            problems.append(f"{key}: unknown key")
            continue
        parser = KEYS[key][0]
        try:
            parsed[key] = parser(str(text))
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigError(problems)

    config = parsed.get("config", KEYS["config"][1])
    preset = PRESETS[config]
    for key in _PINNED[config]:
        if key in parsed and parsed[key] != preset[key]:
            problems.append(f"{key}: {config} requires {key}={_show(preset[key])}, "
                            f"got {_show(parsed[key])}")
    values = {key: default for key, (_, default) in KEYS.items()}
    values.update(preset)
    values.update(parsed)
    problems += _range_problems(values)
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(values)


def _show(v: Any) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    return str(v)


def _range_problems(v: dict[str, Any]) -> list[str]:
    p = []
    if v["payload"] not in PAYLOADS:
        p.append(f"payload: must be one of {', '.join(map(str, PAYLOADS))}, got {v['payload']}")
    if v["duration_s"] <= 0:
        p.append("duration_s: must be positive")
    if v["drain_s"] < 0:
        p.append("drain_s: must be >= 0")
    if not 0 <= v["seed"] < 2 ** 64:
        p.append("seed: must be a 64-bit unsigned integer")
    if v["rt.period_us"] <= 0:
        p.append("rt.period_us: must be positive")
    if v["interference.flows"] <= 0:
        p.append("interference.flows: must be positive")
    if v["interference.aggregate_bps"] <= 0:
        p.append("interference.aggregate_bps: must be positive")
    if not 0 <= v["nic.rt_pcp"] <= 7:
        p.append("nic.rt_pcp: must be in 0..7")
    if v["nic.rt_pcp"] == 0:
        p.append("nic.rt_pcp: must exceed the best-effort PCP 0")
    if v["nic.tsn_shaper"]:
        p.append("nic.tsn_shaper: TSN shaping on TX-0 is not implemented")
    if v["nic.rx_vectors"] not in (1, 2, 4):
        p.append("nic.rx_vectors: must be 1, 2 or 4")
    if v["nic.coalescing_us"] is not None and v["nic.coalescing_us"] < 0:
        p.append("nic.coalescing_us: must be >= 0")
    for key in ("stack.syscall_ns", "stack.softirq_ns", "stack.wake_ns", "stack.contention_base_ns",
                "stack.contention_per_inflight_ns", "stack.copy_ns_per_byte", "stack.contention_jitter",
                "xsk.doorbell_ns", "xsk.wake_ns", "nic.propagation_ns", "nic.coalescing_frames",
                "nic.napi_exit_idle_polls", "nic.irq_latency_ns", "mw.meta_rx_rate_hz",
                "mw.discovery_period_ms", "mw.liveliness_period_ms"):
        if v[key] < 0:
            p.append(f"{key}: must be >= 0")
    for key in ("stack.qdisc_capacity", "stack.fq_quantum", "stack.socket_backlog", "xsk.ring_size",
                "nic.queue_capacity", "nic.line_rate_bps", "nic.napi_budget",
                "nic.napi_poll_interval_ns", "nic.napi_backlog_threshold"):
        if v[key] <= 0:
            p.append(f"{key}: must be positive")
    for kind in ("user", "housekeeping"):
        lo, hi = v[f"mw.{kind}_cost_min_ns"], v[f"mw.{kind}_cost_max_ns"]
        if not 0 < lo <= hi:
            p.append(f"mw.{kind}_cost_min_ns/max_ns: need 0 < min <= max, got {lo}/{hi}")
    return p


def load_scenario(path: str | Path, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    path = Path(path)
    raw = parse_text(path.read_text(), str(path))
    raw.update(overrides or {})
    return build_config(raw)


def scenario(**overrides: Any) -> ScenarioConfig:
    """Build a config from Python values, e.g. ``scenario(config="baseline", payload=64)``.

    Dotted keys are spelled with double underscores: ``nic__coalescing_us=0``.
    """
    raw = {}
    for key, value in overrides.items():
        key = key.replace("__", ".")
        if isinstance(value, bool):
            value = "on" if value else "off"
        elif isinstance(value, tuple) and key == "mw.priority_order":
            value = ",".join(k.name for k in value)
        raw[key] = str(value)
    return build_config(raw)


def field_names(obj) -> list[str]:
    return [f.name for f in fields(obj)]
