"""Trend checks over per-configuration summary tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .config import CONFIGS, PAYLOADS
from .metrics import read_summary_csv

DEGRADATION_FACTOR = 2.0
ISOLATION_FACTOR = 10.0


@dataclass
class Verdict:
    name: str
    ok: bool
    detail: str


@dataclass
class TrendReport:
    verdicts: list[Verdict] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing and bool(self.verdicts) and all(v.ok for v in self.verdicts)

    def to_markdown(self) -> str:
        lines = ["# Trend verification", ""]
        if self.missing:
            lines += ["Missing summary rows:", ""] + [f"- {m}" for m in self.missing] + [""]
        lines += ["| check | verdict | detail |", "|---|---|---|"]
        lines += [f"| {v.name} | {'PASS' if v.ok else 'FAIL'} | {v.detail} |" for v in self.verdicts]
        lines.append("")
        lines.append(f"Overall: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


Table = dict[tuple[str, int, str], dict[str, float]]


def _float(s: str) -> float | None:
    try:
        return float(s)
    except ValueError:
        return None


def evaluate(table: Table) -> TrendReport:
    """Apply the thresholds to ``{(config, payload, 'on'|'off'): row}``.

    A row maps summary column names to floats; unparseable cells count as missing.
    """
    rep = TrendReport()
    for config in CONFIGS:
        for payload in PAYLOADS:
            for interf in ("off", "on"):
                row = table.get((config, payload, interf))
                if row is None or any(v is None for v in row.values()):
                    rep.missing.append(f"{config} payload={payload} interference={interf}")
    if rep.missing:
        return rep

    def get(config, payload, interf, col):
        return table[(config, payload, interf)][col]

    on, off = get("baseline", 1024, "on", "rtt_max"), get("baseline", 1024, "off", "rtt_max")
    rep.verdicts.append(Verdict(
        "baseline_degradation_1024B", on >= DEGRADATION_FACTOR * off,
        f"max RTT on/off = {on:.2f}/{off:.2f} = {on / off if off else float('inf'):.2f}x "
        f"(need >= {DEGRADATION_FACTOR:g}x)"))
    for payload in PAYLOADS:
        iso, base = get("isolated", payload, "on", "rtt_var"), get("baseline", payload, "on", "rtt_var")
        rep.verdicts.append(Verdict(
            f"isolation_variance_{payload}B", iso * ISOLATION_FACTOR <= base,
            f"RTT var isolated/baseline = {iso:.2f}/{base:.2f} (need <= 1/{ISOLATION_FACTOR:g})"))
    for payload in PAYLOADS:
        med_on, med_off = get("isolated", payload, "on", "rtt_med"), get("isolated", payload, "off", "rtt_med")
        rep.verdicts.append(Verdict(
            f"polling_median_{payload}B", med_on <= med_off,
            f"isolated median RTT on/off = {med_on:.2f}/{med_off:.2f} (need on <= off)"))
    return rep


def load_table(summary_dir: str | Path) -> tuple[Table, list[str]]:
    root = Path(summary_dir)
    table: Table = {}
    problems = []
    for config in CONFIGS:
        path = root / config / "summary.csv"
        if not path.is_file():
            problems.append(f"{path}: not found")
            continue
        for row in read_summary_csv(path):
            try:
                key = (config, int(row["payload"]), row["interference"].strip())
            except ValueError:
                problems.append(f"{path}: bad payload {row['payload']!r}")
                continue
            table[key] = {k: _float(v) for k, v in row.items() if k not in ("payload", "interference")}
    return table, problems


def verify_trends(summary_dir: str | Path) -> TrendReport:
    """Read ``<dir>/baseline/summary.csv`` and ``<dir>/isolated/summary.csv`` and judge trends."""
    table, problems = load_table(summary_dir)
    rep = evaluate(table)
    rep.missing = problems + rep.missing
    return rep
