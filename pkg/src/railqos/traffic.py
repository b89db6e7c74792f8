"""Application traffic generators, presets, and handshake sessions."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

from .engine import (
    BoundedPareto,
    Constant,
    Distribution,
    Exponential,
    RngStream,
    Uniform,
    draw,
)
from .model import Packet, TosClass, TransportProtocol, seconds

MTU = 1500


@dataclass(frozen=True)
class OnOff:
    on: Distribution
    off: Distribution


@dataclass(frozen=True)
class ApplicationProfile:
    """Open-loop application source.

    Each generation instant produces one message of `message_size` bytes,
    segmented into packets of at most `mtu` bytes. With a `session`, sources
    start Off and only emit during On periods.
    """

    name: str
    protocol: TransportProtocol
    dst_port: int
    tos: TosClass
    message_size: Distribution
    inter_arrival: Distribution
    sources: tuple[str, ...]
    destination: str
    session: Optional[OnOff] = None
    src_port: Optional[int] = None
    mtu: int = MTU
    port_priority: Optional[int] = None
    start: Optional[Distribution] = None

    def __post_init__(self) -> None:
        if self.mtu < 1:
            raise ValueError("mtu must be >= 1")
        if not 0 <= self.dst_port <= 0xFFFF:
            raise ValueError(f"bad dst_port {self.dst_port}")

    @property
    def source_port(self) -> int:
        return self.dst_port if self.src_port is None else self.src_port

    def duty_cycle(self) -> float:
        if self.session is None:
            return 1.0
        on, off = self.session.on.mean, self.session.off.mean
        if math.isinf(off):
            return 0.0
        return on / (on + off)

    def offered_bps(self) -> float:
        """Long-run offered load of one source, bits per second."""
        mean_msg = self.message_size.mean
        return 8.0 * mean_msg / self.inter_arrival.mean * self.duty_cycle()


@dataclass(frozen=True)
class TcmtProfile:
    """Periodic train-control messages."""

    sources: tuple[str, ...]
    destination: str
    message_bytes: int = 128
    period: float = 0.5
    dst_port: int = 3000
    failure_run: int = 3

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ValueError("tcmt period must be positive")
        if self.message_bytes < 1:
            raise ValueError("tcmt message size must be >= 1 byte")

    def as_profile(self) -> ApplicationProfile:
        return ApplicationProfile(
            name="tcmt",
            protocol=TransportProtocol.UDP,
            dst_port=self.dst_port,
            tos=TosClass.EF,
            message_size=Constant(self.message_bytes),
            inter_arrival=Constant(self.period),
            sources=self.sources,
            destination=self.destination,
        )


def _to_ns(value: float) -> Optional[int]:
    if math.isinf(value):
        return None
    return max(0, seconds(value))


class Generator:
    """Message source for one (profile, source node) pair.

    Draws come from a private stream, so emission times do not depend on
    network state or on other sources.
    """

    def __init__(self, profile: ApplicationProfile, node: str, src_ip: int, dst_ip: int,
                 rng: RngStream, stop_at: Optional[int] = None) -> None:
        self.profile = profile
        self.node = node
        self.src_ip = src_ip
        self.dst_ip = dst_ip
        self.rng = rng
        self.stop_at = stop_at
        self.on_until: Optional[int] = None
        self.messages = 0

    def first_time(self) -> Optional[int]:
        prof = self.profile
        if prof.start is not None:
            t = _to_ns(draw(self.rng, prof.start))
        else:
            gap = draw(self.rng, prof.inter_arrival)
            t = None if math.isinf(gap) else _to_ns(self.rng.random() * gap)
        if t is None:
            return None
        if prof.session is not None:
            return self._next_on_period(t)
        return self._clip(t)

    def _next_on_period(self, off_start: int) -> Optional[int]:
        off = _to_ns(draw(self.rng, self.profile.session.off))
        on = _to_ns(draw(self.rng, self.profile.session.on))
        if off is None:
            return None
        start = off_start + off
        self.on_until = None if on is None else start + on
        return self._clip(start)

    def _clip(self, t: Optional[int]) -> Optional[int]:
        if t is None or (self.stop_at is not None and t >= self.stop_at):
            return None
        return t

    def message_sizes(self) -> list[int]:
        size = max(1, int(round(draw(self.rng, self.profile.message_size))))
        mtu = self.profile.mtu
        full, rest = divmod(size, mtu)
        return [mtu] * full + ([rest] if rest else [])

    def next_packet(self, now: int, next_id: Callable[[], int]) -> tuple[list[Packet], Optional[int]]:
        """Emit the message due at `now`; return its packets and the next emission time."""
        prof = self.profile
        sizes = self.message_sizes()
        msg = self.messages
        self.messages += 1
        packets = []
        for i, size in enumerate(sizes):
            packets.append(Packet(
                id=next_id(), app=prof.name, src_node=self.node, dst_node=prof.destination,
                src_ip=self.src_ip, dst_ip=self.dst_ip, src_port=prof.source_port, dst_port=prof.dst_port,
                protocol=prof.protocol, tos=prof.tos, size_bytes=size, created_at=now,
                msg_id=msg, last_segment=(i == len(sizes) - 1),
            ))
        gap = _to_ns(draw(self.rng, prof.inter_arrival))
        if gap is None:
            return packets, None
        nxt = now + gap
        if prof.session is not None and self.on_until is not None and nxt >= self.on_until:
            return packets, self._next_on_period(self.on_until)
        return packets, self._clip(nxt)


def next_packet(profile: ApplicationProfile, rng: RngStream, now: int, *, node: Optional[str] = None,
                src_ip: int = 0, dst_ip: int = 0, first_id: int = 0) -> tuple[list[Packet], Optional[int]]:
    """Stateless convenience wrapper: one message from a fresh generator."""
    ids = itertools.count(first_id)
    gen = Generator(profile, node or profile.sources[0], src_ip, dst_ip, rng)
    return gen.next_packet(now, ids.__next__)


# --- presets ------------------------------------------------------------

def figure3_profiles(clients: Iterable[str] = tuple(f"client{i}" for i in range(1, 9)),
                     media_server: str = "server1", data_server: str = "server2") -> list[ApplicationProfile]:
    """E-mail, HTTP, voice and video conference, marked BE, BE, EF, AF."""
    clients = tuple(clients)
    return [
        ApplicationProfile(
            name="email", protocol=TransportProtocol.TCP, dst_port=25, tos=TosClass.BE,
            message_size=Exponential(1 / 10_000), inter_arrival=Exponential(1 / 2.0),
            sources=clients, destination=data_server,
        ),
        ApplicationProfile(
            name="http", protocol=TransportProtocol.TCP, dst_port=80, tos=TosClass.BE,
            message_size=BoundedPareto(200, 100_000, 1.3), inter_arrival=Exponential(1 / 0.2),
            sources=clients, destination=data_server,
            session=OnOff(on=Exponential(1 / 20.0), off=Exponential(1 / 10.0)),
        ),
        ApplicationProfile(
            name="voice", protocol=TransportProtocol.UDP, dst_port=5004, tos=TosClass.EF,
            message_size=Constant(200), inter_arrival=Constant(0.02),
            sources=clients, destination=media_server,
        ),
        ApplicationProfile(
            name="video", protocol=TransportProtocol.UDP, dst_port=5006, tos=TosClass.AF,
            message_size=Constant(3 * 1024), inter_arrival=Constant(0.1), mtu=1024,
            sources=clients, destination=media_server,
        ),
    ]


def bulk_profile(clients: Iterable[str] = tuple(f"client{i}" for i in range(1, 9)),
                 server: str = "server2") -> ApplicationProfile:
    """Bursty bulk UDP transfer whose hosts mark it EF.

    ToS and protocol cannot tell it apart from voice; its port can.
    """
    return ApplicationProfile(
        name="bulk", protocol=TransportProtocol.UDP, dst_port=9000, tos=TosClass.EF,
        message_size=Constant(1500), inter_arrival=Constant(0.015),
        sources=tuple(clients), destination=server, port_priority=0,
        session=OnOff(on=Exponential(1 / 2.0), off=Exponential(1 / 2.0)),
    )


def tcmt_profile(clients: Iterable[str] = tuple(f"client{i}" for i in range(1, 9)),
                 server: str = "server1") -> TcmtProfile:
    return TcmtProfile(sources=tuple(clients), destination=server)


# --- handshakes ---------------------------------------------------------

class HandshakeKind(enum.Enum):
    CONNECTION_ESTABLISHMENT = "connection_establishment"
    NETWORK_REGISTRATION = "network_registration"


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILED_TIMEOUT = "failed_timeout"


@dataclass(frozen=True)
class HandshakeSpec:
    kind: HandshakeKind
    count: int
    sources: tuple[str, ...]
    destination: str
    round_trips: int = 3
    processing: Distribution = Uniform(0.1, 0.4)
    timeout: int = seconds(10)
    dst_port: int = 3001
    packet_bytes: int = 100

    def __post_init__(self) -> None:
        if self.count < 0 or self.round_trips < 1:
            raise ValueError("handshake count must be >= 0 and round_trips >= 1")
        if self.timeout <= 0:
            raise ValueError("handshake timeout must be positive")
        if not self.sources:
            raise ValueError("handshake needs at least one source")


def establishment_spec(clients, server: str, count: int = 200) -> HandshakeSpec:
    return HandshakeSpec(HandshakeKind.CONNECTION_ESTABLISHMENT, count, tuple(clients), server,
                         round_trips=3, processing=Uniform(0.1, 0.4), timeout=seconds(10), dst_port=3001)


def registration_spec(clients, server: str, count: int = 100) -> HandshakeSpec:
    return HandshakeSpec(HandshakeKind.NETWORK_REGISTRATION, count, tuple(clients), server,
                         round_trips=5, processing=Uniform(0.5, 2.0), timeout=seconds(40), dst_port=3002)


@dataclass
class HandshakeSession:
    """Request/response exchange of `round_trips` pairs.

    Steps are counted in received packets; packets with an even step index
    travel client -> server. A lost packet stalls the session until timeout.
    """

    id: int
    kind: HandshakeKind
    client: str
    server: str
    round_trips: int
    timeout: int
    processing: Distribution
    step: int = 0
    start: Optional[int] = None
    end: Optional[int] = None
    outcome: Optional[Outcome] = None

    @property
    def total_steps(self) -> int:
        return 2 * self.round_trips

    @property
    def delay(self) -> Optional[int]:
        if self.outcome is Outcome.SUCCESS:
            return self.end - self.start
        return None

    def direction(self) -> tuple[str, str]:
        return (self.client, self.server) if self.step % 2 == 0 else (self.server, self.client)

    def begin(self, now: int) -> None:
        self.start = now

    def on_receive(self, now: int, rng: RngStream) -> Optional[int]:
        """Record a delivered step; return the processing delay before the
        next send, or None when the session is finished (or stale)."""
        if self.outcome is not None:
            return None
        self.step += 1
        if self.step >= self.total_steps:
            self.outcome = Outcome.SUCCESS
            self.end = now
            return None
        return _to_ns(draw(rng, self.processing)) or 0

    def on_timeout(self, now: int) -> None:
        if self.outcome is None:
            self.outcome = Outcome.FAILED_TIMEOUT
            self.end = now


def run_handshake(session: HandshakeSession, transport: Callable[[str, str, int], Optional[int]],
                  rng: RngStream, start: int = 0) -> HandshakeSession:
    """Drive a session sequentially over `transport(src, dst, now)`, which
    returns the one-way delay in ns or None if the packet is lost."""
    session.begin(start)
    now = start
    deadline = start + session.timeout
    while session.outcome is None:
        src, dst = session.direction()
        d = transport(src, dst, now)
        if d is None or now + d > deadline:
            session.on_timeout(deadline)
            break
        now += d
        wait = session.on_receive(now, rng)
        if wait is not None:
            now += wait
    return session


def session_starts(spec: HandshakeSpec, rng: RngStream, earliest: int, latest: int) -> list[int]:
    """Sorted start instants, uniform over [earliest, latest]."""
    if latest < earliest:
        latest = earliest
    span = latest - earliest
    return sorted(earliest + int(rng.random() * span) for _ in range(spec.count))


def with_sources(profile: ApplicationProfile, sources: Iterable[str]) -> ApplicationProfile:
    return replace(profile, sources=tuple(sources))

