"""Command-line entry point: ``mcnet-sim run | sweep | verify``.

Exit codes: 0 success, 1 invariant or trend failure, 2 usage or config error.
Any scenario key can be overridden as ``--set key=value`` or ``--key value``
(for example ``--nic.coalescing_us 0``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import KEYS, ConfigError, build_config, parse_text
from .experiment import run_experiment, sweep
from .trends import verify_trends

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# Convenience flags -> scenario keys.
SHORT_FLAGS = {"config": "config", "payload": "payload", "interference": "interference",
               "duration": "duration_s", "seed": "seed", "out": "output_dir"}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcnet-sim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--scenario", type=Path, help="key=value scenario file")
        sp.add_argument("--config", choices=["baseline", "isolated"])
        sp.add_argument("--payload", type=int, choices=[64, 512, 1024])
        sp.add_argument("--interference", choices=["on", "off"])
        sp.add_argument("--duration", type=float, help="simulated seconds of sends")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any scenario key (repeatable)")

    run = sub.add_parser("run", help="simulate one scenario")
    scenario_args(run)
    run.add_argument("--trace", action="store_true", help="also write the event trace")
    sw = sub.add_parser("sweep", help="run the 12-run grid")
    scenario_args(sw)
    sw.add_argument("--all", action="store_true", help="both configurations (default when --config is absent)")
    ver = sub.add_parser("verify", help="check trends over a sweep directory")
    ver.add_argument("dir", type=Path)
    return p


def _dotted_overrides(extra: list[str]) -> dict[str, str]:
    """Parse leftover ``--section.key value`` / ``--section.key=value`` flags."""
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if key not in KEYS:
            raise UsageError(f"unknown option --{key}")
        if not eq:
            if i + 1 >= len(extra):
                raise UsageError(f"--{key} needs a value")
            i += 1
            value = extra[i]
        out[key] = value
        i += 1
    return out


def raw_scenario(args, extra: list[str]) -> dict[str, str]:
    raw: dict[str, str] = {}
    if args.scenario is not None:
        if not args.scenario.is_file():
            raise UsageError(f"scenario file not found: {args.scenario}")
        raw.update(parse_text(args.scenario.read_text(), str(args.scenario)))
    raw.update(_dotted_overrides(extra))
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip()] = value.strip()
    for flag, key in SHORT_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            raw[key] = str(value)
    return raw


def cmd_run(args, extra) -> int:
    raw = raw_scenario(args, extra)
    if args.trace:
        raw["trace"] = "on"
    cfg = build_config(raw)
    out = cfg.output_dir
    result = run_experiment(cfg, out)
    s = result.summary
    if s.empty:
        print(f"{cfg.label()}: no complete samples")
    else:
        print(f"{cfg.label()}: n={s.n} lost={s.incomplete} RTT med/max={s.rtt.median:.2f}/"
              f"{s.rtt.max:.2f} us var={s.rtt.variance:.2f} us^2 ({result.wall_s:.1f} s wall)")
    for c in result.failed():
        print(f"invariant failed: {c.name}: {c.detail}", file=sys.stderr)
    print(f"artifacts in {out}")
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_sweep(args, extra) -> int:
    raw = raw_scenario(args, extra)
    only = raw.pop("config", None) if not args.all else None
    raw.pop("payload", None)
    raw.pop("interference", None)
    build_config(raw)  # validate shared knobs before the first long run
    out = Path(raw.get("output_dir", "out"))
    results = sweep(out, raw, configs=(only,) if only else None)
    for r in results:
        s = r.summary
        desc = "no data" if s.empty else f"med {s.rtt.median:.2f} max {s.rtt.max:.2f} var {s.rtt.variance:.2f}"
        print(f"{r.cfg.label():<24} {desc}  ({r.wall_s:.1f} s)")
    bad = [(r.cfg.label(), c) for r in results for c in r.failed()]
    for label, c in bad:
        print(f"invariant failed: {label}: {c.name}: {c.detail}", file=sys.stderr)
    print(f"summaries in {out}/<config>/summary.csv")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_verify(args) -> int:
    if not args.dir.is_dir():
        raise UsageError(f"not a directory: {args.dir}")
    rep = verify_trends(args.dir)
    text = rep.to_markdown()
    (args.dir / "trends.md").write_text(text)
    print(text, end="")
    return EXIT_OK if rep.ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            if extra:
                raise UsageError(f"unexpected arguments {extra}")
            return cmd_verify(args)
        if args.command == "run":
            return cmd_run(args, extra)
        return cmd_sweep(args, extra)
    except (UsageError, ConfigError) as exc:
        print(f"mcnet-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mcnet-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
