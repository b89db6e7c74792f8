"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line,
and the collected lines are repeated in the terminal summary."""

import os
import random
import time

import pytest

from railqos.classification import ALL_SCHEMES, ClassificationTable, QosScheme, SetPriority, lookup
from railqos.engine import Exponential
from railqos.metrics import T_D, T_TI, EST_DELAY, EST_FAIL, REG_DELAY, Verdict, evaluate_indicators, extract_episodes
from railqos.model import seconds
from railqos.network import Capability, ImpairmentState
from railqos.runner import run_experiment
from railqos.scenario import figure3_scenario, tcmt_scenario
from railqos.simulation import simulate

from conftest import single_message_profile, two_node_scenario
from test_classification import brute_force, random_packet, random_predicate

CRITERIA_LINES: list[str] = []
RUNTIME_LIMIT_S = 60.0


def check(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title} | {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def figure3_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("figure3")


@pytest.fixture(scope="session")
def figure3(figure3_dir):
    """All five schemes on the figure-3 preset: 300 s, seed 42."""
    jobs = max(1, min(len(ALL_SCHEMES), os.cpu_count() or 1))
    outputs = run_experiment(figure3_scenario(seed=42, duration=300, warmup=30), ALL_SCHEMES, figure3_dir, jobs=jobs)
    return {o.scheme: o for o in outputs}


@pytest.fixture(scope="session")
def tcmt_run():
    t0 = time.perf_counter()
    res = simulate(tcmt_scenario(seed=42, duration=300, warmup=30, scheme=QosScheme.COMPREHENSIVE))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def mm1_run():
    # 80 Mbps, exponential sizes with mean 10 kB: mu = 1000 pkt/s; lambda = 500 pkt/s
    prof = single_message_profile(start=None, message_size=Exponential(1 / 10_000),
                                  inter_arrival=Exponential(500.0), mtu=10**9)
    sc = two_node_scenario([prof], bandwidth_bps=80_000_000, propagation_s=0.0, queue=10**9,
                           duration_s=400.0, warmup_s=0.0, seed=7)
    return simulate(sc)


@pytest.fixture(scope="session")
def probe_run():
    return simulate(two_node_scenario([single_message_profile(size=1500, at_s=1.0)],
                                      bandwidth_bps=2_048_000, propagation_s=1e-3))


def video(o):
    return o.stats["video"]


def test_criterion_01_video_loss(figure3):
    loss = {s: video(o).loss_rate for s, o in figure3.items()}
    comp = loss[QosScheme.COMPREHENSIVE]
    ok = (loss[QosScheme.PORT_BASED] < 0.01 and comp < 0.01
          and all(loss[s] >= 10 * comp for s in (QosScheme.NON_QOS, QosScheme.TOS_BASED, QosScheme.PROTOCOL_BASED)))
    slowest = max(o.wall_seconds for o in figure3.values())
    ok = ok and slowest <= RUNTIME_LIMIT_S
    detail = ", ".join(f"{s.value}={v:.4f}" for s, v in loss.items()) + f"; slowest run {slowest:.1f} s"
    check(1, "video loss: port/comprehensive < 1%, others >= 10x comprehensive, <= 60 s per scheme", ok, detail)


def test_criterion_02_video_delay(figure3):
    d = {s: video(o).mean_delay() for s, o in figure3.items()}
    ok = all(d[s] <= 1.0 and d[s] <= 0.5 * d[QosScheme.TOS_BASED] and d[s] <= 0.25 * d[QosScheme.NON_QOS]
             for s in (QosScheme.PORT_BASED, QosScheme.COMPREHENSIVE))
    detail = ", ".join(f"{s.value}={v:.4f}s" for s, v in d.items())
    check(2, "video mean delay: port/comprehensive <= 1 s, <= 0.5x ToS, <= 0.25x non-QoS", ok, detail)


def test_criterion_03_voice_delay(figure3):
    d = {s: o.stats["voice"].mean_delay() for s, o in figure3.items()}
    low = min(d.values())
    ok = d[QosScheme.PORT_BASED] == low and d[QosScheme.COMPREHENSIVE] == low
    detail = ", ".join(f"{s.value}={v:.4f}s" for s, v in d.items())
    check(3, "voice mean delay minimal under port/comprehensive", ok, detail)


def test_criterion_04_single_packet(probe_run):
    delays = probe_run.stats["probe"].delays
    ok = delays == [6_859_375]
    check(4, "1500 B over idle 2.048 Mbps, 1 ms propagation = 6 859 375 ns", ok, f"measured {delays}")


def test_criterion_05_mm1(mm1_run):
    wait_total, served = mm1_run.port_waits[("a", "ab")]
    lam, mu = 500.0, 1000.0
    expected = (lam / mu) / (mu - lam)
    measured = wait_total / served / 1e9
    ok = served >= 10**5 and abs(measured - expected) <= 0.10 * expected
    check(5, "M/M/1 rho=0.5 mean wait within 10% of rho/(mu-lambda)", ok,
          f"{served} packets, measured {measured * 1e3:.4f} ms, expected {expected * 1e3:.4f} ms")


def all_monitors(figure3, tcmt_run, mm1_run, probe_run):
    runs = {f"figure3/{s.value}": (o.monitors, o.conservation_ok) for s, o in figure3.items()}
    runs["tcmt"] = (tcmt_run[0].monitors, tcmt_run[0].conservation_ok)
    runs["mm1"] = (mm1_run.monitors, mm1_run.conservation_ok)
    runs["probe"] = (probe_run.monitors, probe_run.conservation_ok)
    return runs


def test_criterion_06_scheduling_monitors(figure3, tcmt_run, mm1_run, probe_run):
    runs = all_monitors(figure3, tcmt_run, mm1_run, probe_run)
    bad = {name: m for name, (m, _) in runs.items() if any(m.values())}
    check(6, "priority/FIFO/idle/event-order monitors report zero violations", not bad,
          f"{len(runs)} runs checked" + (f", violations: {bad}" if bad else ""))


def test_criterion_07_conservation(figure3, tcmt_run, mm1_run, probe_run):
    runs = all_monitors(figure3, tcmt_run, mm1_run, probe_run)
    broken = [name for name, (_, ok) in runs.items() if not ok]
    check(7, "generated = delivered + dropped + in-flight on every run", not broken,
          f"{len(runs)} runs checked" + (f", broken: {broken}" if broken else ""))


def test_criterion_08_determinism(figure3, figure3_dir, tmp_path):
    again = [QosScheme.NON_QOS, QosScheme.COMPREHENSIVE]
    run_experiment(figure3_scenario(seed=42, duration=300, warmup=30), again, tmp_path)
    diffs = []
    for s in again:
        for name in ("flows.csv", "timeseries.csv", "qos_report.csv", "manifest.json"):
            if (figure3_dir / s.value / name).read_bytes() != (tmp_path / s.value / name).read_bytes():
                diffs.append(f"{s.value}/{name}")
    digests = [o.generation_digests for o in figure3.values()]
    crn = all(d == digests[0] for d in digests)
    check(8, "identical scenario+seed gives byte-identical CSVs; generation times equal across schemes",
          not diffs and crn, f"re-ran {len(again)} schemes, differing files {diffs}, common random numbers {crn}")


def test_criterion_09_indicator_oracle():
    g, b = ImpairmentState.GOOD, ImpairmentState.BAD
    pass_rep = evaluate_indicators([seconds(0.3)] * 9500 + [seconds(0.6)] * 500)
    fail_rep = evaluate_indicators([seconds(0.3)] * 9400 + [seconds(0.6)] * 600)
    trace = [(0, g), (seconds(10), b), (seconds(10.5), g), (seconds(40), b), (seconds(40.2), g)]
    t_ti, t_rec = extract_episodes(trace, seconds(100))
    empty = evaluate_indicators([])
    ok = (pass_rep.verdict(T_D) is Verdict.PASS and fail_rep.verdict(T_D) is Verdict.FAIL
          and t_ti == [seconds(0.5), seconds(0.2)] and t_rec == [seconds(29.5)]
          and all(empty.verdict(r) is Verdict.INSUFFICIENT_DATA for r in (EST_DELAY, EST_FAIL, REG_DELAY)))
    check(9, "indicator evaluator verdicts and episode extraction on constructed inputs", ok,
          f"T_d {pass_rep.verdict(T_D).value}/{fail_rep.verdict(T_D).value}, T_TI={t_ti}, T_REC={t_rec}")


def test_criterion_10_classification_oracle():
    rng = random.Random(10)
    mismatches = checks = 0
    for _ in range(50):
        entries = [(random_predicate(rng), [SetPriority(rng.randint(0, 7))]) for _ in range(rng.randint(0, 8))]
        table = ClassificationTable.build(entries)
        for _ in range(1000):
            p = random_packet(rng)
            in_port = rng.choice(["l1", "l2"])
            cap = rng.choice(list(Capability))
            checks += 1
            mismatches += lookup(table, p, in_port, cap) != brute_force(table.rules, p, in_port, cap)
    check(10, "lookup equals brute-force max-specificity scan", mismatches == 0,
          f"{checks} lookups over 50 random tables, {mismatches} mismatches")


def test_criterion_11_indicator_demo(tcmt_run):
    res, wall = tcmt_run
    td, tti = res.report.row(T_D), res.report.row(T_TI)
    measured = [f"{r.clause.percentile:g}%={r.measured}" for r in td.results + tti.results]
    ok = td.verdict is Verdict.PASS and tti.verdict is Verdict.PASS and wall <= RUNTIME_LIMIT_S
    check(11, "train-control demo: T_d Pass and T_TI Pass within 60 s", ok,
          f"T_d {td.verdict.value} (n={td.samples}), T_TI {tti.verdict.value} (n={tti.samples}), "
          f"{' '.join(measured)}, {wall:.1f} s")
