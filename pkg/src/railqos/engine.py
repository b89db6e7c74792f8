"""Discrete-event scheduler and named, reproducible random streams."""

from __future__ import annotations

import enum
import hashlib
import heapq
import math
import random
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Union


class SchedulingInPast(RuntimeError):
    """An event was scheduled before the current simulation time."""


class InvalidDistribution(ValueError):
    pass


class EventKind(enum.IntEnum):
    GENERATE = 0
    ARRIVE_AT_NODE = 1
    TRANSMISSION_COMPLETE = 2
    IMPAIRMENT_TRANSITION = 3
    HANDSHAKE_STEP = 4
    FORWARD_READY = 5
    HANDSHAKE_TIMEOUT = 6


class Event(NamedTuple):
    time: int
    seq: int
    kind: EventKind
    payload: tuple


class Scheduler:
    """Priority queue of events ordered by (time, seq).

    Handlers are registered per event kind and receive the payload tuple
    unpacked as positional arguments. There is no cancellation: stale
    events must check their own state and do nothing.
    """

    def __init__(self) -> None:
        self._queue: list[Event] = []
        self._seq = 0
        self._now = 0
        self._handlers: dict[int, Callable[..., Any]] = {}
        self.processed = 0
        self.order_violations = 0
        self._last_key = (-1, -1)

    def now(self) -> int:
        return self._now

    def __len__(self) -> int:
        return len(self._queue)

    def pending(self) -> list[Event]:
        return sorted(self._queue)

    def on(self, kind: EventKind, handler: Callable[..., Any]) -> None:
        self._handlers[kind] = handler

    def schedule(self, time: int, kind: EventKind, *payload: Any) -> Event:
        if time < self._now:
            raise SchedulingInPast(f"event {kind.name} at {time} ns < now {self._now} ns")
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with time <= t_end; return how many ran."""
        if t_end < self._now:
            raise SchedulingInPast(f"t_end {t_end} < now {self._now}")
        queue = self._queue
        handlers = self._handlers
        count = 0
        last_time, last_seq = self._last_key
        while queue and queue[0].time <= t_end:
            ev = heapq.heappop(queue)
            if ev.time < last_time or (ev.time == last_time and ev.seq <= last_seq):
                self.order_violations += 1
            last_time, last_seq = ev.time, ev.seq
            self._now = ev.time
            handlers[ev.kind](*ev.payload)
            count += 1
        self._last_key = (last_time, last_seq)
        self._now = t_end
        self.processed += count
        return count


def _stream_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class RngStream:
    """Independent pseudo-random stream identified by (seed, label)."""

    __slots__ = ("seed", "label", "rng")

    def __init__(self, seed: int, label: str) -> None:
        self.seed = seed
        self.label = label
        self.rng = random.Random(_stream_seed(seed, label))

    def random(self) -> float:
        return self.rng.random()

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r})"


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self) -> None:
        if math.isnan(self.value):
            raise InvalidDistribution("constant value is NaN")

    def sample(self, rng: random.Random) -> float:
        return self.value

    @property
    def mean(self) -> float:
        return self.value


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise InvalidDistribution(f"uniform bounds out of order: {self.low} > {self.high}")

    def sample(self, rng: random.Random) -> float:
        return self.low + (self.high - self.low) * rng.random()

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise InvalidDistribution(f"exponential rate must be positive, got {self.rate}")

    def sample(self, rng: random.Random) -> float:
        return rng.expovariate(self.rate)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class BoundedPareto:
    low: float
    high: float
    shape: float

    def __post_init__(self) -> None:
        if not (0 < self.low <= self.high):
            raise InvalidDistribution("bounded pareto needs 0 < low <= high")
        if not self.shape > 0:
            raise InvalidDistribution("bounded pareto shape must be positive")

    def sample(self, rng: random.Random) -> float:
        # inverse CDF
        u = rng.random()
        ratio = (self.low / self.high) ** self.shape
        return self.low / (1.0 - u * (1.0 - ratio)) ** (1.0 / self.shape)

    @property
    def mean(self) -> float:
        a, lo, hi = self.shape, self.low, self.high
        norm = 1.0 - (lo / hi) ** a
        if a == 1.0:
            return lo * math.log(hi / lo) / norm
        return a * lo**a * (lo ** (1 - a) - hi ** (1 - a)) / ((a - 1) * norm)


Distribution = Union[Constant, Uniform, Exponential, BoundedPareto]


def draw(stream: RngStream, dist: Distribution) -> float:
    return dist.sample(stream.rng)


def dist_to_dict(dist: Distribution) -> dict:
    if isinstance(dist, Constant):
        return {"kind": "constant", "value": float(dist.value)}
    if isinstance(dist, Uniform):
        return {"kind": "uniform", "low": float(dist.low), "high": float(dist.high)}
    if isinstance(dist, Exponential):
        return {"kind": "exponential", "rate": float(dist.rate)}
    if isinstance(dist, BoundedPareto):
        return {"kind": "bounded_pareto", "low": float(dist.low), "high": float(dist.high), "shape": float(dist.shape)}
    raise TypeError(f"not a distribution: {dist!r}")


def dist_from_dict(data: dict) -> Distribution:
    """Build a distribution from its JSON form.

    Raises InvalidDistribution for bad parameters, KeyError/TypeError for
    malformed input.
    """
    kind = data["kind"]
    if kind == "constant":
        return Constant(float(data["value"]))
    if kind == "uniform":
        return Uniform(float(data["low"]), float(data["high"]))
    if kind == "exponential":
        if "rate" in data:
            return Exponential(float(data["rate"]))
        mean = float(data["mean"])
        if not mean > 0:
            raise InvalidDistribution(f"exponential mean must be positive, got {mean}")
        return Exponential(1.0 / mean)
    if kind == "bounded_pareto":
        return BoundedPareto(float(data["low"]), float(data["high"]), float(data["shape"]))
    raise InvalidDistribution(f"unknown distribution kind {kind!r}")
