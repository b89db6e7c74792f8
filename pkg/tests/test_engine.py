import math
import statistics

import pytest
from hypothesis import given, strategies as st

from railqos.engine import (
    BoundedPareto,
    Constant,
    EventKind,
    Exponential,
    InvalidDistribution,
    RngStream,
    Scheduler,
    SchedulingInPast,
    Uniform,
    dist_from_dict,
    dist_to_dict,
    draw,
)
from railqos.model import seconds


def recording_scheduler():
    s = Scheduler()
    log = []
    s.on(EventKind.GENERATE, lambda tag: log.append((s.now(), tag)))
    return s, log


def test_schedule_at_now_runs_before_later_events():
    s, log = recording_scheduler()
    s.schedule(5, EventKind.GENERATE, "later")
    s.schedule(0, EventKind.GENERATE, "now")
    s.run_until(10)
    assert [tag for _, tag in log] == ["now", "later"]


def test_equal_times_run_in_insertion_order():
    s, log = recording_scheduler()
    for tag in "abc":
        s.schedule(7, EventKind.GENERATE, tag)
    s.run_until(7)
    assert [tag for _, tag in log] == ["a", "b", "c"]


def test_scheduling_in_the_past_raises():
    s, _ = recording_scheduler()
    s.run_until(seconds(1))
    with pytest.raises(SchedulingInPast):
        s.schedule(seconds(1) - 1, EventKind.GENERATE, "x")


def test_empty_run_advances_clock():
    s, _ = recording_scheduler()
    assert s.run_until(seconds(10)) == 0
    assert s.now() == seconds(10)


def test_run_until_processes_in_order():
    s, log = recording_scheduler()
    s.schedule(seconds(2), EventKind.GENERATE, "c")
    s.schedule(seconds(1), EventKind.GENERATE, "a")
    s.schedule(seconds(1), EventKind.GENERATE, "b")
    assert s.run_until(seconds(2)) == 3
    assert log == [(seconds(1), "a"), (seconds(1), "b"), (seconds(2), "c")]


def test_run_until_boundary_leaves_later_events():
    s, log = recording_scheduler()
    s.schedule(seconds(1), EventKind.GENERATE, "a")
    s.schedule(seconds(3), EventKind.GENERATE, "b")
    assert s.run_until(seconds(2)) == 1
    assert [e.time for e in s.pending()] == [seconds(3)]


def test_handlers_can_schedule_at_current_time():
    s = Scheduler()
    log = []

    def handler(n):
        log.append(n)
        if n < 3:
            s.schedule(s.now(), EventKind.GENERATE, n + 1)

    s.on(EventKind.GENERATE, handler)
    s.schedule(4, EventKind.GENERATE, 0)
    s.run_until(4)
    assert log == [0, 1, 2, 3]
    assert s.order_violations == 0


@given(st.lists(st.integers(0, 1000), max_size=60), st.integers(0, 1000))
def test_dispatch_order_and_count(times, t_end):
    s, log = recording_scheduler()
    for i, t in enumerate(times):
        s.schedule(t, EventKind.GENERATE, i)
    n = s.run_until(t_end)
    expected = sorted((t, i) for i, t in enumerate(times) if t <= t_end)
    assert n == len(expected)
    assert log == expected
    assert s.order_violations == 0


def test_constant_draw():
    stream = RngStream(1, "c")
    assert all(draw(stream, Constant(0.02)) == 0.02 for _ in range(100))


def test_exponential_sample_mean():
    stream = RngStream(42, "exp")
    samples = [draw(stream, Exponential(100.0)) for _ in range(10**6)]
    assert abs(statistics.fmean(samples) - 0.01) <= 0.0005


def test_streams_are_reproducible():
    a, b = RngStream(7, "voice.client1"), RngStream(7, "voice.client1")
    dist = Exponential(3.0)
    assert [draw(a, dist) for _ in range(1000)] == [draw(b, dist) for _ in range(1000)]


def test_streams_with_different_labels_differ():
    a, b = RngStream(7, "x"), RngStream(7, "y")
    assert [a.random() for _ in range(5)] != [b.random() for _ in range(5)]


@pytest.mark.parametrize("make", [
    lambda: Exponential(0),
    lambda: Exponential(-1),
    lambda: Uniform(2, 1),
    lambda: BoundedPareto(10, 5, 1.2),
    lambda: BoundedPareto(1, 5, 0),
])
def test_invalid_distributions(make):
    with pytest.raises(InvalidDistribution):
        make()


def test_uniform_bounds_and_mean():
    stream = RngStream(3, "u")
    samples = [draw(stream, Uniform(0.1, 0.4)) for _ in range(20000)]
    assert min(samples) >= 0.1 and max(samples) <= 0.4
    assert abs(statistics.fmean(samples) - 0.25) < 0.005


def test_bounded_pareto_support_and_mean():
    dist = BoundedPareto(200, 100_000, 1.3)
    # independent closed form for the bounded Pareto mean
    a, L, H = 1.3, 200.0, 100_000.0
    expected = (L**a / (1 - (L / H) ** a)) * (a / (a - 1)) * (1 / L ** (a - 1) - 1 / H ** (a - 1))
    assert math.isclose(dist.mean, expected, rel_tol=1e-9)
    stream = RngStream(5, "bp")
    samples = [draw(stream, dist) for _ in range(200_000)]
    assert min(samples) >= 200 and max(samples) <= 100_000
    assert abs(statistics.fmean(samples) - expected) / expected < 0.05


@pytest.mark.parametrize("dist", [Constant(0.5), Uniform(0.1, 0.4), Exponential(5.0), BoundedPareto(200, 1e5, 1.3)])
def test_distribution_dict_round_trip(dist):
    assert dist_from_dict(dist_to_dict(dist)) == dist


def test_exponential_accepts_mean_form():
    assert dist_from_dict({"kind": "exponential", "mean": 0.2}).mean == pytest.approx(0.2)
