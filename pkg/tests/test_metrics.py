import math

import pytest
from hypothesis import given, strategies as st

from railqos.metrics import (
    CONN_FAIL,
    EST_DELAY,
    EST_FAIL,
    REG_DELAY,
    T_D,
    T_REC,
    T_TI,
    AppStats,
    EmptySamples,
    FlowStats,
    HandshakeSummary,
    InsufficientSamples,
    Verdict,
    evaluate_indicators,
    extract_episodes,
    flows_csv,
    jitter,
    percentile,
    report_csv,
    report_table,
)
from railqos.model import seconds
from railqos.network import DropCause, ImpairmentState

G, B = ImpairmentState.GOOD, ImpairmentState.BAD


# --- percentile ----------------------------------------------------------------

def test_percentile_examples():
    assert percentile([1, 2, 3, 4, 5], 95) == 5
    assert percentile([7], 50) == 7
    assert percentile(list(range(1, 101)), 95) == 95


def test_percentile_of_nothing():
    with pytest.raises(EmptySamples):
        percentile([], 50)


def test_percentile_range():
    with pytest.raises(ValueError):
        percentile([1], 0)


@given(st.lists(st.integers(-10**9, 10**9), min_size=1, max_size=300),
       st.floats(0.01, 100), st.floats(0.01, 100))
def test_percentile_properties(xs, p, q):
    assert percentile(xs, 100) == max(xs)
    lo, hi = sorted((p, q))
    assert percentile(xs, lo) <= percentile(xs, hi)
    # nearest rank: at least p% of the samples are <= the answer
    v = percentile(xs, lo)
    assert sum(x <= v for x in xs) >= math.ceil(lo / 100 * len(xs) - 1e-9)


# --- jitter ----------------------------------------------------------------------

def test_jitter_examples():
    assert jitter([1, 1, 1]) == 0
    assert jitter([1, 3, 2]) == 1.5
    with pytest.raises(InsufficientSamples):
        jitter([5])


# --- episodes --------------------------------------------------------------------

def test_episodes_from_crafted_trace():
    trace = [(0, G), (seconds(10), B), (seconds(10.5), G), (seconds(40), B), (seconds(40.2), G)]
    t_ti, t_rec = extract_episodes(trace, seconds(100))
    assert t_ti == [seconds(0.5), seconds(0.2)]
    assert t_rec == [seconds(29.5)]


def test_episodes_without_bad_intervals():
    assert extract_episodes([(0, G)], seconds(100)) == ([], [])


def test_unterminated_bad_interval_is_truncated():
    t_ti, t_rec = extract_episodes([(0, G), (seconds(95), B)], seconds(100))
    assert t_ti == [seconds(5)] and t_rec == []


def alternating_trace(gaps):
    t, state, trace = 0, G, [(0, G)]
    for g in gaps:
        t += g
        state = B if state is G else G
        trace.append((t, state))
    return trace


@given(st.lists(st.integers(1, 10**6), max_size=40), st.integers(1, 5 * 10**7))
def test_episode_durations_positive_and_bounded(gaps, end):
    t_ti, t_rec = extract_episodes(alternating_trace(gaps), end)
    assert all(d > 0 for d in t_ti + t_rec)
    assert sum(t_ti) + sum(t_rec) <= end


# --- indicator evaluation ------------------------------------------------------

def test_td_pass_at_95th_percentile():
    samples = [seconds(0.3)] * 9500 + [seconds(0.6)] * 500
    row = evaluate_indicators(samples).row(T_D)
    assert row.results[0].measured == 0.3
    assert row.verdict is Verdict.PASS


def test_td_fail_when_tail_grows():
    samples = [seconds(0.3)] * 9400 + [seconds(0.6)] * 600
    row = evaluate_indicators(samples).row(T_D)
    assert row.results[0].measured == 0.6
    assert row.verdict is Verdict.FAIL


def test_no_handshakes_is_insufficient():
    rep = evaluate_indicators([seconds(0.1)] * 100)
    for name in (EST_DELAY, EST_FAIL, REG_DELAY):
        assert rep.verdict(name) is Verdict.INSUFFICIENT_DATA


def test_fewer_than_twenty_samples_is_insufficient():
    assert evaluate_indicators([seconds(0.1)] * 19).verdict(T_D) is Verdict.INSUFFICIENT_DATA
    assert evaluate_indicators([seconds(0.1)] * 20).verdict(T_D) is Verdict.PASS


def test_establishment_rows():
    ok = HandshakeSummary(tuple([seconds(2)] * 99 + [seconds(9.9)]), failed=0)
    rep = evaluate_indicators([], establishment=ok)
    assert rep.verdict(EST_DELAY) is Verdict.PASS
    assert rep.verdict(EST_FAIL) is Verdict.PASS
    too_slow = HandshakeSummary(tuple([seconds(2)] * 99 + [seconds(10.5)]))
    assert evaluate_indicators([], establishment=too_slow).verdict(EST_DELAY) is Verdict.FAIL
    flaky = HandshakeSummary(tuple([seconds(1)] * 99), failed=1)
    assert evaluate_indicators([], establishment=flaky).verdict(EST_FAIL) is Verdict.FAIL


def test_registration_rows():
    good = HandshakeSummary(tuple([seconds(10)] * 100))
    assert evaluate_indicators([], registration=good).verdict(REG_DELAY) is Verdict.PASS
    tail = HandshakeSummary(tuple([seconds(10)] * 98 + [seconds(36)] * 2))
    row = evaluate_indicators([], registration=tail).row(REG_DELAY)
    assert [r.verdict for r in row.results] == [Verdict.PASS, Verdict.FAIL, Verdict.PASS]


def test_interference_rows():
    t_ti = [seconds(0.3)] * 99 + [seconds(0.95)]
    t_rec = [seconds(25)] * 95 + [seconds(10)] * 5
    rep = evaluate_indicators([], episodes=(t_ti, t_rec))
    assert rep.verdict(T_TI) is Verdict.PASS
    # the 5th percentile lands on a 10 s gap: not every long-gap clause holds
    assert rep.row(T_REC).results[0].verdict is Verdict.FAIL
    assert rep.row(T_REC).results[1].verdict is Verdict.PASS


def test_connection_failure_rate_row():
    assert evaluate_indicators([], connection_failures=(0, 100)).verdict(CONN_FAIL) is Verdict.PASS
    assert evaluate_indicators([], connection_failures=(1, 100)).verdict(CONN_FAIL) is Verdict.PASS
    assert evaluate_indicators([], connection_failures=(2, 100)).verdict(CONN_FAIL) is Verdict.FAIL
    assert evaluate_indicators([], connection_failures=(0, 8)).verdict(CONN_FAIL) is Verdict.INSUFFICIENT_DATA


def test_evaluation_is_pure():
    args = ([seconds(0.2)] * 50, ([seconds(0.4)] * 30, [seconds(30)] * 30))
    assert evaluate_indicators(*args) == evaluate_indicators(*args)


def test_report_serializations():
    rep = evaluate_indicators([seconds(0.3)] * 9500 + [seconds(0.6)] * 500)
    lines = report_csv(rep).splitlines()
    assert lines[0] == "indicator,threshold,percentile,measured,verdict"
    assert "T_d,<= 0.5 s,95,0.300000,Pass" in lines
    assert "T_d" in report_table(rep)


# --- flow statistics ---------------------------------------------------------------

def test_flow_stats_csv():
    fs = FlowStats()
    fs["voice"].sent = 4
    fs["voice"].delivered = 3
    fs["voice"].drops[DropCause.QUEUE_OVERFLOW] = 1
    fs["voice"].delays.extend([seconds(0.01), seconds(0.03), seconds(0.02)])
    text = flows_csv(fs).splitlines()
    assert text[0] == "app,sent,delivered,lost_overflow,lost_impairment,mean_delay_s,p95_delay_s,jitter_s,loss_rate"
    assert text[1] == "voice,4,3,1,0,0.020000000,0.030000000,0.015000000,0.250000"


def test_empty_app_stats():
    s = AppStats()
    assert s.loss_rate == 0 and s.mean_delay() is None and s.jitter() is None
