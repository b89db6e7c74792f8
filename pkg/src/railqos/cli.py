"""Command-line entry point: run a scenario under one or more QoS schemes."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .classification import ALL_SCHEMES, QosScheme
from .metrics import report_csv, report_table
from .runner import RunFailed, run_experiment, summary_csv
from .scenario import PRESETS, ParseError, ValidationError, emit_scenario, parse_scenario, with_overrides

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def parse_schemes(text: str) -> list[QosScheme]:
    if text.strip().lower() == "all":
        return list(ALL_SCHEMES)
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            scheme = QosScheme.parse(item)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        if scheme not in out:
            out.append(scheme)
    if not out:
        raise argparse.ArgumentTypeError("no schemes given")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="railqos", description=__doc__)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--scenario", type=Path, metavar="PATH", help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario (default: figure3)")
    ap.add_argument("--schemes", type=parse_schemes, default=list(ALL_SCHEMES), metavar="LIST|all",
                    help="comma-separated schemes: non_qos, tos_based, protocol_based, port_based, comprehensive")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--duration", type=float, metavar="S")
    ap.add_argument("--warmup", type=float, metavar="S")
    ap.add_argument("--out", type=Path, metavar="DIR", help="write per-scheme outputs under DIR")
    ap.add_argument("--report", choices=("table", "csv"), default="table")
    ap.add_argument("--jobs", type=int, default=1, help="run schemes in parallel processes")
    ap.add_argument("--emit-scenario", action="store_true", help="print the resolved scenario JSON and exit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.scenario is not None:
            scenario = parse_scenario(args.scenario)
        else:
            scenario = PRESETS[args.preset or "figure3"]()
        scenario = with_overrides(scenario, seed=args.seed, duration=args.duration, warmup=args.warmup)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        for msg in exc.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.emit_scenario:
        sys.stdout.write(emit_scenario(scenario))
        return EXIT_OK

    try:
        outputs = run_experiment(scenario, args.schemes, args.out, jobs=max(1, args.jobs))
    except (RunFailed, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    sys.stdout.write(summary_csv(outputs))
    for out in outputs:
        print(f"\n# {out.scheme.value}  ({out.wall_seconds:.1f} s wall, conservation "
              f"{'ok' if out.conservation_ok else 'BROKEN'})")
        sys.stdout.write(report_table(out.report) if args.report == "table" else report_csv(out.report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
