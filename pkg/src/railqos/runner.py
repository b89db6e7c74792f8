"""Scheme sweeps over one scenario and the files they produce."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__
from .classification import QosScheme, dump_rulesets, ruleset_for_scheme
from .metrics import FLOW_COLUMNS, FLOW_CSV_VERSION, FlowStats, QosIndicatorReport, flows_csv, report_csv, report_table
from .model import to_seconds
from .scenario import Scenario, emit_scenario, scenario_digest
from .simulation import SimulationResult, simulate

TIMESERIES_COLUMNS = ("second", "app", "delivered", "dropped", "mean_delay_s")


class RunFailed(RuntimeError):
    def __init__(self, scheme: QosScheme, cause: BaseException):
        self.scheme = scheme
        super().__init__(f"scheme {scheme.value}: {type(cause).__name__}: {cause}")


@dataclass
class RunOutput:
    scheme: QosScheme
    stats: FlowStats
    report: QosIndicatorReport
    manifest: dict
    generation_digests: dict[str, str]
    monitors: dict[str, int]
    conservation_ok: bool
    generated: int
    delivered: int
    in_flight: int
    wall_seconds: float
    files: dict[str, Path] = field(default_factory=dict)


def timeseries_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMESERIES_COLUMNS)
    for sec, app, dlv, drp, mean in result.timeseries:
        w.writerow([sec, app, dlv, drp, "" if mean is None else f"{mean:.9f}"])
    return buf.getvalue()


def manifest_for(scenario: Scenario) -> dict:
    return {
        "tool": "railqos",
        "version": __version__,
        "csv_version": FLOW_CSV_VERSION,
        "scenario": scenario.name,
        "scenario_digest": scenario_digest(scenario),
        "scheme": scenario.scheme.value,
        "seed": scenario.seed,
        "duration_s": to_seconds(scenario.duration),
        "warmup_s": to_seconds(scenario.warmup),
    }


def write_outputs(result: SimulationResult, out_dir: Path) -> dict[str, Path]:
    sc = result.scenario
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "flows": out_dir / "flows.csv",
        "timeseries": out_dir / "timeseries.csv",
        "report_csv": out_dir / "qos_report.csv",
        "report_txt": out_dir / "qos_report.txt",
        "rules": out_dir / "rules.txt",
        "scenario": out_dir / "scenario.json",
        "manifest": out_dir / "manifest.json",
    }
    files["flows"].write_text(flows_csv(result.stats))
    files["timeseries"].write_text(timeseries_csv(result))
    files["report_csv"].write_text(report_csv(result.report))
    files["report_txt"].write_text(report_table(result.report))
    tables = ruleset_for_scheme(sc.scheme, sc.all_profiles(), sc.nodes)
    files["rules"].write_text(dump_rulesets(tables, sc.nodes))
    files["scenario"].write_text(emit_scenario(sc))
    files["manifest"].write_text(json.dumps(manifest_for(sc), indent=2, sort_keys=True) + "\n")
    return files


def run_scheme(scenario: Scenario, scheme: QosScheme, out_dir: Optional[Path] = None) -> RunOutput:
    sc = replace(scenario, scheme=scheme)
    try:
        result = simulate(sc)
    except Exception as exc:  # surfaced with scheme context
        raise RunFailed(scheme, exc) from exc
    files = write_outputs(result, out_dir / scheme.value) if out_dir is not None else {}
    return RunOutput(
        scheme=scheme, stats=result.stats, report=result.report, manifest=manifest_for(sc),
        generation_digests=result.generation_digests, monitors=result.monitors,
        conservation_ok=result.conservation_ok, generated=result.generated, delivered=result.delivered,
        in_flight=result.in_flight, wall_seconds=result.wall_seconds, files=files,
    )


def _run_scheme_job(args) -> RunOutput:
    return run_scheme(*args)


def summary_csv(outputs: Sequence[RunOutput]) -> str:
    """Every flows.csv row, prefixed by the scheme."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scheme",) + FLOW_COLUMNS)
    for out in outputs:
        rows = list(csv.reader(io.StringIO(flows_csv(out.stats))))[1:]
        for row in rows:
            w.writerow([out.scheme.value] + row)
    return buf.getvalue()


def run_experiment(scenario: Scenario, schemes: Iterable[QosScheme], out_dir: Optional[Path] = None,
                   jobs: int = 1) -> list[RunOutput]:
    """One simulation per scheme, same seed and random streams for all."""
    schemes = list(schemes)
    out_dir = Path(out_dir) if out_dir is not None else None
    if jobs > 1 and len(schemes) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(schemes))) as pool:
            outputs = list(pool.map(_run_scheme_job, [(scenario, s, out_dir) for s in schemes]))
    else:
        outputs = [run_scheme(scenario, s, out_dir) for s in schemes]
    if out_dir is not None:
        (out_dir / "summary.csv").write_text(summary_csv(outputs))
    return outputs
