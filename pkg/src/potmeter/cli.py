"""Command-line entry point.

    potmeter <pipeline> --config PATH [--out-json PATH] [--out-csv PATH] [--seed N] [--quiet]
    potmeter presets [NAME]

Exit codes: 0 all checks pass, 2 a tolerance check failed, 3 configuration
error, 4 numeric failure inside a pipeline stage.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import PIPELINES, load_config
from .errors import ConfigError, PotmeterError
from .presets import PRESETS, load_preset, preset_text
from .runner import resolve_threads, run_scenario

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="potmeter",
        description="Weak-value reconstruction of a 1D vector potential, with a simulated pointer meter.",
    )
    p.add_argument("pipeline", choices=[*PIPELINES, "all", "presets"])
    p.add_argument("name", nargs="?", help="preset name (with the 'presets' command only)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="scenario TOML, or a JSON report to re-run")
    src.add_argument("--preset", choices=sorted(PRESETS), help="run a built-in scenario")
    p.add_argument("--out-json", type=Path)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--seed", type=int, help="override sampling.master_seed")
    p.add_argument("--quiet", action="store_true")
    return p


def _summary(report, elapsed: float) -> str:
    lines = [f"scenario {report.config.name!r}: {', '.join(report.pipelines_run)} ({elapsed:.2f} s)"]
    for c in report.checks:
        mark = "PASS" if c.passed else "FAIL"
        val = "n/a" if c.value is None else f"{c.value:.3e}"
        lines.append(f"  {mark} {c.name:<34} {val} <= {c.tolerance:.3e}")
    for w in report.warnings:
        lines.append(f"  warning: {w}")
    lines.append("all checks passed" if report.passed else f"{len(report.failures)} check(s) failed")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    err = sys.stderr

    if args.pipeline == "presets":
        if args.name:
            try:
                sys.stdout.write(preset_text(args.name))
            except ConfigError as exc:
                print(f"config error: {exc}", file=err)
                return EXIT_CONFIG
        else:
            print("\n".join(sorted(PRESETS)))
        return EXIT_OK
    if args.name:
        print("config error: positional NAME is only valid with 'presets'", file=err)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        if args.config is None and args.preset is None:
            raise ConfigError("", "one of --config or --preset is required")
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be non-negative")
            cfg = cfg.with_seed(args.seed)
        report = run_scenario(cfg, args.pipeline, resolve_threads())
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except PotmeterError as exc:
        print(f"pipeline error: {exc}", file=err)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - t0

    try:
        if args.out_json:
            args.out_json.write_text(report.to_json(), encoding="utf-8")
        if args.out_csv:
            args.out_csv.write_text(report.to_csv(), encoding="utf-8")
    except OSError as exc:
        print(f"config error: cannot write output: {exc}", file=err)
        return EXIT_CONFIG
    if not args.quiet:
        print(_summary(report, elapsed))
    return EXIT_OK if report.passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
