"""Per-application statistics, percentiles, interference episodes and the
train-control QoS indicator report."""

from __future__ import annotations

import csv
import enum
import io
import math
import operator
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .model import NS_PER_S
from .network import DropCause, ImpairmentState

MIN_SAMPLES = 20


class EmptySamples(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


def percentile(samples: Sequence, p: float):
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not samples:
        raise EmptySamples("percentile of an empty sample")
    if not 0 < p <= 100:
        raise ValueError(f"percentile p={p} outside (0, 100]")
    ordered = sorted(samples)
    rank = math.ceil(Fraction(str(p)) * len(ordered) / 100)
    return ordered[max(rank, 1) - 1]


def jitter(delays: Sequence[float]) -> float:
    """Mean absolute difference of successive delays (arrival order)."""
    if len(delays) < 2:
        raise InsufficientSamples("jitter needs at least two samples")
    total = sum(abs(b - a) for a, b in zip(delays, delays[1:]))
    return total / (len(delays) - 1)


def extract_episodes(trace: Sequence[tuple[int, ImpairmentState]], run_end: int) -> tuple[list[int], list[int]]:
    """Split an impairment trace into interference (Bad) durations and the
    error-free (Good) durations lying strictly between two Bad intervals.

    An unterminated Bad interval is cut at `run_end`; leading and trailing
    Good intervals are not counted.
    """
    points = [(t, s) for t, s in trace if t < run_end]
    intervals = []
    for i, (t, state) in enumerate(points):
        end = points[i + 1][0] if i + 1 < len(points) else run_end
        if end > t:
            intervals.append((state, end - t))
    bad_positions = [i for i, (s, _) in enumerate(intervals) if s is ImpairmentState.BAD]
    t_ti = [intervals[i][1] for i in bad_positions]
    t_rec = []
    if bad_positions:
        first, last = bad_positions[0], bad_positions[-1]
        t_rec = [d for i, (s, d) in enumerate(intervals) if s is ImpairmentState.GOOD and first < i < last]
    return t_ti, t_rec


@dataclass
class AppStats:
    """Counters and delay samples for one application (post-warmup)."""

    sent: int = 0
    delivered: int = 0
    drops: Counter = field(default_factory=Counter)
    delays: list[int] = field(default_factory=list)

    @property
    def dropped(self) -> int:
        return sum(self.drops.values())

    @property
    def loss_rate(self) -> float:
        return self.dropped / self.sent if self.sent else 0.0

    def mean_delay(self) -> Optional[float]:
        if not self.delays:
            return None
        return sum(self.delays) / len(self.delays) / NS_PER_S

    def p95_delay(self) -> Optional[float]:
        if not self.delays:
            return None
        return percentile(self.delays, 95) / NS_PER_S

    def jitter(self) -> Optional[float]:
        if len(self.delays) < 2:
            return None
        return jitter(self.delays) / NS_PER_S


class FlowStats(dict):
    """Mapping app name -> AppStats, created on first access."""

    def __missing__(self, key: str) -> AppStats:
        value = self[key] = AppStats()
        return value


FLOW_COLUMNS = ("app", "sent", "delivered", "lost_overflow", "lost_impairment",
                "mean_delay_s", "p95_delay_s", "jitter_s", "loss_rate")
FLOW_CSV_VERSION = 1


def _fmt(value: Optional[float], digits: int = 9) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def flows_csv(stats: FlowStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FLOW_COLUMNS)
    for app in sorted(stats):
        s = stats[app]
        w.writerow([app, s.sent, s.delivered, s.drops[DropCause.QUEUE_OVERFLOW], s.drops[DropCause.IMPAIRMENT],
                    _fmt(s.mean_delay()), _fmt(s.p95_delay()), _fmt(s.jitter()), _fmt(s.loss_rate, 6)])
    return buf.getvalue()


# --- indicator report -----------------------------------------------------

class Verdict(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INSUFFICIENT_DATA = "InsufficientData"


_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


@dataclass(frozen=True)
class Clause:
    op: str
    threshold: float
    percentile: Optional[float] = None  # None: the row measures a rate
    unit: str = "s"

    def describe(self) -> str:
        unit = f" {self.unit}" if self.unit else ""
        return f"{self.op} {self.threshold:g}{unit}"


@dataclass(frozen=True)
class ClauseResult:
    clause: Clause
    measured: Optional[float]
    verdict: Verdict


@dataclass(frozen=True)
class IndicatorRow:
    name: str
    samples: int
    results: tuple[ClauseResult, ...]

    @property
    def verdict(self) -> Verdict:
        verdicts = {r.verdict for r in self.results}
        if Verdict.INSUFFICIENT_DATA in verdicts:
            return Verdict.INSUFFICIENT_DATA
        return Verdict.FAIL if Verdict.FAIL in verdicts else Verdict.PASS


@dataclass(frozen=True)
class QosIndicatorReport:
    rows: tuple[IndicatorRow, ...]

    def row(self, name: str) -> IndicatorRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def verdict(self, name: str) -> Verdict:
        return self.row(name).verdict


T_D = "T_d"
T_TI = "T_TI"
T_REC = "T_REC"
EST_DELAY = "Connection Establishment Delay"
EST_FAIL = "Connection Establishment Failed Possibility"
CONN_FAIL = "Connection Failure Rate"
REG_DELAY = "Network Registration Delay"

INDICATOR_THRESHOLDS = {
    EST_DELAY: (Clause("<", 8.5, 95), Clause("<=", 10, 100)),
    EST_FAIL: (Clause("<", 1e-2, unit=""),),
    CONN_FAIL: (Clause("<=", 1e-2, unit=""),),
    T_D: (Clause("<=", 0.5, 95),),
    T_TI: (Clause("<", 0.8, 95), Clause("<", 1.0, 99)),
    # "> 20 s (95%)": 95% of error-free periods exceed 20 s, i.e. the 5th percentile does
    T_REC: (Clause(">", 20, 5), Clause(">", 7, 1)),
    REG_DELAY: (Clause("<=", 30, 95), Clause("<=", 35, 99), Clause("<=", 40, 100)),
}


@dataclass(frozen=True)
class HandshakeSummary:
    delays: tuple[int, ...] = ()
    failed: int = 0

    @property
    def attempts(self) -> int:
        return len(self.delays) + self.failed

    @classmethod
    def from_sessions(cls, sessions: Iterable) -> "HandshakeSummary":
        delays, failed = [], 0
        for s in sessions:
            if s.outcome is None:
                continue
            if s.delay is None:
                failed += 1
            else:
                delays.append(s.delay)
        return cls(tuple(delays), failed)


def _percentile_row(name: str, samples_ns: Sequence[int]) -> IndicatorRow:
    results = []
    for clause in INDICATOR_THRESHOLDS[name]:
        if len(samples_ns) < MIN_SAMPLES:
            results.append(ClauseResult(clause, None, Verdict.INSUFFICIENT_DATA))
            continue
        measured = percentile(samples_ns, clause.percentile) / NS_PER_S
        ok = _OPS[clause.op](measured, clause.threshold)
        results.append(ClauseResult(clause, measured, Verdict.PASS if ok else Verdict.FAIL))
    return IndicatorRow(name, len(samples_ns), tuple(results))


def _rate_row(name: str, events: int, trials: int) -> IndicatorRow:
    (clause,) = INDICATOR_THRESHOLDS[name]
    if trials < MIN_SAMPLES:
        return IndicatorRow(name, trials, (ClauseResult(clause, None, Verdict.INSUFFICIENT_DATA),))
    rate = events / trials
    ok = _OPS[clause.op](rate, clause.threshold)
    return IndicatorRow(name, trials, (ClauseResult(clause, rate, Verdict.PASS if ok else Verdict.FAIL),))


def evaluate_indicators(td_samples: Sequence[int], episodes: tuple[Sequence[int], Sequence[int]] = ((), ()),
                    establishment: HandshakeSummary = HandshakeSummary(),
                    registration: HandshakeSummary = HandshakeSummary(),
                    connection_failures: tuple[int, int] = (0, 0)) -> QosIndicatorReport:
    """Judge simulated samples (ns) against each indicator row.

    `connection_failures` is (failed TCMT sessions, TCMT sessions).
    """
    t_ti, t_rec = episodes
    rows = (
        _percentile_row(EST_DELAY, establishment.delays),
        _rate_row(EST_FAIL, establishment.failed, establishment.attempts),
        _rate_row(CONN_FAIL, *connection_failures),
        _percentile_row(T_D, td_samples),
        _percentile_row(T_TI, t_ti),
        _percentile_row(T_REC, t_rec),
        _percentile_row(REG_DELAY, registration.delays),
    )
    return QosIndicatorReport(rows)


REPORT_COLUMNS = ("indicator", "threshold", "percentile", "measured", "verdict")


def report_csv(report: QosIndicatorReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in report.rows:
        for r in row.results:
            pct = "" if r.clause.percentile is None else f"{r.clause.percentile:g}"
            w.writerow([row.name, r.clause.describe(), pct, _fmt(r.measured, 6), r.verdict.value])
    return buf.getvalue()


def report_table(report: QosIndicatorReport) -> str:
    lines = [f"{'indicator':<46} {'n':>6}  {'clause':<14} {'measured':>12}  verdict"]
    for row in report.rows:
        for i, r in enumerate(row.results):
            pct = "rate" if r.clause.percentile is None else f"p{r.clause.percentile:g}"
            label = row.name if i == 0 else ""
            n = str(row.samples) if i == 0 else ""
            measured = "-" if r.measured is None else f"{r.measured:.6g}"
            lines.append(f"{label:<46} {n:>6}  {pct + ' ' + r.clause.describe():<14} {measured:>12}  {r.verdict.value}")
        lines.append(f"{'':<46} {'':>6}  {'=> row':<14} {'':>12}  {row.verdict.value}")
    return "\n".join(lines) + "\n"
