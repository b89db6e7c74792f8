"""Shared domain vocabulary: simulation time, ToS classes, priorities, packets."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

NS_PER_S = 1_000_000_000
MIN_PRIORITY = 0
MAX_PRIORITY = 7
DEFAULT_TTL = 32


def seconds(value: float) -> int:
    """Convert seconds to integer nanoseconds (round to nearest)."""
    return int(round(value * NS_PER_S))


def to_seconds(ns: int) -> float:
    return ns / NS_PER_S


class TosClass(enum.IntEnum):
    """DiffServ class. Integer value encodes the order BE < AF < EF."""

    BE = 0
    AF = 1
    EF = 2


class TransportProtocol(enum.Enum):
    TCP = "TCP"
    UDP = "UDP"


_TOS_PRIORITY = {TosClass.BE: 0, TosClass.AF: 4, TosClass.EF: 6}


def default_priority(tos: TosClass) -> int:
    return _TOS_PRIORITY[tos]


def check_priority(level: int) -> int:
    if not MIN_PRIORITY <= level <= MAX_PRIORITY:
        raise ValueError(f"priority {level} outside {MIN_PRIORITY}..{MAX_PRIORITY}")
    return level


class FlowKey(NamedTuple):
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: TransportProtocol


@dataclass(slots=True, eq=False)
class Packet:
    """A packet in flight.

    `priority` and `dst_port` may be rewritten by classification actions.
    `msg_id` groups the segments of one application message; `last_segment`
    marks the segment whose delivery completes the message.
    """

    id: int
    app: str
    src_node: str
    dst_node: str
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: TransportProtocol
    tos: TosClass
    size_bytes: int
    created_at: int
    priority: int = 0
    ttl: int = DEFAULT_TTL
    msg_id: int = 0
    last_segment: bool = True
    session: Optional[int] = None

    def __post_init__(self) -> None:
        if self.size_bytes < 1:
            raise ValueError("size_bytes must be >= 1")


def flow_key(p: Packet) -> FlowKey:
    return FlowKey(p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.protocol)
