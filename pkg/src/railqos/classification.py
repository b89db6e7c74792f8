"""Stream-classification table: predicates, most-specific lookup, actions,
and compilation of the five QoS schemes into per-node rule sets."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .model import (
    NS_PER_S,
    FlowKey,
    Packet,
    TosClass,
    TransportProtocol,
    check_priority,
    default_priority,
    flow_key,
)
from .network import Capability, NodeSpec

FIELD_WEIGHT = 64


class QosScheme(enum.Enum):
    NON_QOS = "non_qos"
    TOS_BASED = "tos_based"
    PROTOCOL_BASED = "protocol_based"
    PORT_BASED = "port_based"
    COMPREHENSIVE = "comprehensive"

    @classmethod
    def parse(cls, text: str) -> "QosScheme":
        key = text.strip().lower().replace("-", "_")
        aliases = {"nonqos": "non_qos", "none": "non_qos", "tos": "tos_based", "protocol": "protocol_based",
                   "port": "port_based", "all": "comprehensive", "all_based": "comprehensive"}
        key = aliases.get(key, key)
        return cls(key)


ALL_SCHEMES = tuple(QosScheme)


class ConflictingProfilePorts(ValueError):
    pass


class RedirectToUnknownLink(RuntimeError):
    pass


@dataclass(frozen=True)
class Prefix:
    addr: int
    length: int

    def __post_init__(self) -> None:
        if not 0 <= self.length <= 32:
            raise ValueError(f"prefix length {self.length} outside 0..32")

    @property
    def mask(self) -> int:
        return (0xFFFFFFFF << (32 - self.length)) & 0xFFFFFFFF if self.length else 0

    def contains(self, ip: int) -> bool:
        m = self.mask
        return (ip & m) == (self.addr & m)

    def __str__(self) -> str:
        return f"{ipaddress.IPv4Address(self.addr)}/{self.length}"


@dataclass(frozen=True)
class PortRange:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not 0 <= self.lo <= self.hi <= 0xFFFF:
            raise ValueError(f"bad port range {self.lo}..{self.hi}")

    def __contains__(self, port: int) -> bool:
        return self.lo <= port <= self.hi

    def __str__(self) -> str:
        return str(self.lo) if self.lo == self.hi else f"{self.lo}-{self.hi}"


@dataclass(frozen=True)
class MatchPredicate:
    """Conjunction of optional header-field tests. Unset fields are wildcards.

    `src_mac`/`dst_mac` are node-scoped pseudo-MACs: the previous hop and the
    current node. `app` stands in for application-aware (L7) recognition.
    """

    in_port: Optional[str] = None
    src_mac: Optional[str] = None
    dst_mac: Optional[str] = None
    src_ip_prefix: Optional[Prefix] = None
    dst_ip_prefix: Optional[Prefix] = None
    protocol: Optional[TransportProtocol] = None
    src_port_range: Optional[PortRange] = None
    dst_port_range: Optional[PortRange] = None
    tos: Optional[TosClass] = None
    app: Optional[str] = None

    def specificity(self) -> int:
        score = 0
        for name in ("in_port", "src_mac", "dst_mac", "protocol", "src_port_range", "dst_port_range", "tos", "app"):
            if getattr(self, name) is not None:
                score += FIELD_WEIGHT
        for prefix in (self.src_ip_prefix, self.dst_ip_prefix):
            if prefix is not None:
                score += prefix.length
        return score

    def required_capability(self) -> Capability:
        if self.app is not None:
            return Capability.L7
        if self.src_port_range is not None or self.dst_port_range is not None:
            return Capability.L4
        if (self.src_ip_prefix is not None or self.dst_ip_prefix is not None
                or self.protocol is not None or self.tos is not None):
            return Capability.L3
        return Capability.L2

    def fields_match(self, p: Packet, in_port: Optional[str], prev_hop: Optional[str], node: Optional[str]) -> bool:
        if self.in_port is not None and self.in_port != in_port:
            return False
        if self.src_mac is not None and self.src_mac != prev_hop:
            return False
        if self.dst_mac is not None and self.dst_mac != node:
            return False
        if self.src_ip_prefix is not None and not self.src_ip_prefix.contains(p.src_ip):
            return False
        if self.dst_ip_prefix is not None and not self.dst_ip_prefix.contains(p.dst_ip):
            return False
        if self.protocol is not None and self.protocol is not p.protocol:
            return False
        if self.src_port_range is not None and p.src_port not in self.src_port_range:
            return False
        if self.dst_port_range is not None and p.dst_port not in self.dst_port_range:
            return False
        if self.tos is not None and self.tos is not p.tos:
            return False
        if self.app is not None and self.app != p.app:
            return False
        return True

    def __str__(self) -> str:
        parts = []
        for name in ("in_port", "src_mac", "dst_mac", "src_ip_prefix", "dst_ip_prefix",
                     "protocol", "src_port_range", "dst_port_range", "tos", "app"):
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, enum.Enum):
                value = value.name
            label = {"src_ip_prefix": "src_ip", "dst_ip_prefix": "dst_ip",
                     "src_port_range": "src_port", "dst_port_range": "dst_port"}.get(name, name)
            parts.append(f"{label}={value}")
        return " ".join(parts) if parts else "*"


@dataclass(frozen=True)
class SetPriority:
    level: int

    def __post_init__(self) -> None:
        check_priority(self.level)

    def __str__(self) -> str:
        return f"set_priority({self.level})"


@dataclass(frozen=True)
class RedirectDstPort:
    port: int

    def __str__(self) -> str:
        return f"redirect_dst_port({self.port})"


@dataclass(frozen=True)
class RedirectNextHop:
    link_id: str

    def __str__(self) -> str:
        return f"redirect_next_hop({self.link_id})"


@dataclass(frozen=True)
class Police:
    rate_bps: int
    burst_bytes: int

    def __post_init__(self) -> None:
        if self.rate_bps <= 0 or self.burst_bytes <= 0:
            raise ValueError("police rate and burst must be positive")

    def __str__(self) -> str:
        return f"police({self.rate_bps}bps,{self.burst_bytes}B)"


@dataclass(frozen=True)
class Forward:
    def __str__(self) -> str:
        return "forward"


Action = Union[SetPriority, RedirectDstPort, RedirectNextHop, Police, Forward]


@dataclass(frozen=True)
class ClassificationRule:
    index: int
    predicate: MatchPredicate
    actions: tuple[Action, ...] = ()

    def __post_init__(self) -> None:
        if sum(isinstance(a, SetPriority) for a in self.actions) > 1:
            raise ValueError("at most one SetPriority per rule")
        if sum(isinstance(a, (RedirectDstPort, RedirectNextHop)) for a in self.actions) > 1:
            raise ValueError("at most one redirect per rule")

    @property
    def required_capability(self) -> Capability:
        return self.predicate.required_capability()

    def specificity(self) -> int:
        return self.predicate.specificity()


def specificity(r: ClassificationRule) -> int:
    return r.predicate.specificity()


@dataclass(frozen=True)
class ClassificationTable:
    """Ordered rules plus the default action.

    The default forwards at the ToS-derived priority, or at priority 0 when
    `tos_default` is off (the scheme without QoS awareness).
    """

    rules: tuple[ClassificationRule, ...] = ()
    tos_default: bool = True

    def __post_init__(self) -> None:
        if [r.index for r in self.rules] != list(range(len(self.rules))):
            raise ValueError("rule indices must be dense 0..n-1 in table order")

    @classmethod
    def build(cls, entries: Iterable[tuple[MatchPredicate, Sequence[Action]]], tos_default: bool = True):
        rules = tuple(ClassificationRule(i, pred, tuple(acts)) for i, (pred, acts) in enumerate(entries))
        return cls(rules, tos_default)

    def __len__(self) -> int:
        return len(self.rules)


DEFAULT = None  # lookup result when no rule matches


def matches(r: ClassificationRule, p: Packet, in_port: Optional[str], capability: Capability,
            prev_hop: Optional[str] = None, node: Optional[str] = None) -> bool:
    if r.required_capability > capability:
        return False
    return r.predicate.fields_match(p, in_port, prev_hop, node)


def lookup(t: ClassificationTable, p: Packet, in_port: Optional[str], capability: Capability,
           prev_hop: Optional[str] = None, node: Optional[str] = None) -> Optional[ClassificationRule]:
    """Most specific matching rule (lowest index on ties), or DEFAULT."""
    best = None
    best_score = -1
    for rule in t.rules:
        if matches(rule, p, in_port, capability, prev_hop, node):
            score = rule.specificity()
            if score > best_score:
                best, best_score = rule, score
    return best


class TokenBucket:
    """Token bucket in integer bit-nanosecond units (exact arithmetic)."""

    __slots__ = ("rate_bps", "capacity", "tokens", "last")

    def __init__(self, rate_bps: int, burst_bytes: int, now: int = 0) -> None:
        self.rate_bps = rate_bps
        self.capacity = burst_bytes * 8 * NS_PER_S
        self.tokens = self.capacity
        self.last = now

    def consume(self, size_bytes: int, now: int) -> bool:
        self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate_bps)
        self.last = now
        cost = size_bytes * 8 * NS_PER_S
        if cost <= self.tokens:
            self.tokens -= cost
            return True
        return False


@dataclass
class Directive:
    """Result of applying a rule: where to send the packet, or drop it."""

    next_link: Optional[str] = None
    policed: bool = False


@dataclass
class PolicerState:
    buckets: dict[tuple, TokenBucket] = field(default_factory=dict)

    def bucket(self, key: tuple, police: Police, now: int) -> TokenBucket:
        b = self.buckets.get(key)
        if b is None:
            b = self.buckets[key] = TokenBucket(police.rate_bps, police.burst_bytes, now)
        return b


def apply_actions(p: Packet, rule: Optional[ClassificationRule], tos_default: bool = True, *,
                  now: int = 0, node: str = "", attached_links: Iterable[str] = (),
                  policers: Optional[PolicerState] = None) -> Directive:
    """Run a rule's actions (or the default) against `p`, mutating it."""
    if rule is None:
        p.priority = default_priority(p.tos) if tos_default else 0
        return Directive()
    directive = Directive()
    priority_set = False
    key: FlowKey = flow_key(p)
    for action in rule.actions:
        if isinstance(action, SetPriority):
            p.priority = action.level
            priority_set = True
        elif isinstance(action, RedirectDstPort):
            p.dst_port = action.port
        elif isinstance(action, RedirectNextHop):
            if action.link_id not in attached_links:
                raise RedirectToUnknownLink(f"link {action.link_id} is not attached to node {node or '?'}")
            directive.next_link = action.link_id
        elif isinstance(action, Police):
            state = policers if policers is not None else PolicerState()
            if not state.bucket((node, rule.index, key), action, now).consume(p.size_bytes, now):
                directive.policed = True
                return directive
    if not priority_set:
        p.priority = default_priority(p.tos) if tos_default else 0
    return directive


# --- scheme compilation -------------------------------------------------

PORT_PRIORITY = {"voice": 7, "video": 5, "http": 1, "email": 0, "tcmt": 7}
PROTOCOL_PRIORITY = {TransportProtocol.UDP: 6, TransportProtocol.TCP: 0}


def port_priority(profile) -> int:
    explicit = getattr(profile, "port_priority", None)
    if explicit is not None:
        return explicit
    return PORT_PRIORITY.get(profile.name, 0)


def _check_ports(profiles) -> None:
    seen: dict[int, str] = {}
    for prof in profiles:
        other = seen.get(prof.dst_port)
        if other is not None and other != prof.name:
            raise ConflictingProfilePorts(f"applications {other!r} and {prof.name!r} share dst port {prof.dst_port}")
        seen[prof.dst_port] = prof.name


def _tos_rules() -> list[tuple[MatchPredicate, list[Action]]]:
    return [(MatchPredicate(tos=t), [SetPriority(default_priority(t))])
            for t in sorted(TosClass, reverse=True)]


def _protocol_rules() -> list[tuple[MatchPredicate, list[Action]]]:
    return [(MatchPredicate(protocol=proto), [SetPriority(level)])
            for proto, level in PROTOCOL_PRIORITY.items()]


def _port_rules(profiles) -> list[tuple[MatchPredicate, list[Action]]]:
    return [(MatchPredicate(dst_port_range=PortRange(p.dst_port, p.dst_port)), [SetPriority(port_priority(p))])
            for p in profiles]


def _refinement_rules(profiles, server_ips: dict[str, int]) -> list[tuple[MatchPredicate, list[Action]]]:
    out = []
    for p in profiles:
        pred = MatchPredicate(
            protocol=p.protocol,
            tos=p.tos,
            dst_port_range=PortRange(p.dst_port, p.dst_port),
            dst_ip_prefix=Prefix(server_ips[p.destination], 32),
        )
        out.append((pred, [SetPriority(port_priority(p))]))
    return out


def ruleset_for_scheme(scheme: QosScheme, profiles, nodes: Iterable[NodeSpec]) -> dict[str, ClassificationTable]:
    """Compile a scheme into one table per node.

    Rules are installed only on nodes able to evaluate them; every other
    node runs the default action.
    """
    profiles = list(profiles)
    nodes = list(nodes)
    _check_ports(profiles)
    if scheme is QosScheme.NON_QOS:
        return {n.id: ClassificationTable((), tos_default=False) for n in nodes}

    if scheme is QosScheme.TOS_BASED:
        entries = _tos_rules()
    elif scheme is QosScheme.PROTOCOL_BASED:
        entries = _protocol_rules()
    elif scheme is QosScheme.PORT_BASED:
        entries = _port_rules(profiles)
    else:
        ips = {n.id: n.ip for n in nodes}
        entries = _tos_rules() + _protocol_rules() + _port_rules(profiles) + _refinement_rules(profiles, ips)

    tables = {}
    for n in nodes:
        usable = [e for e in entries if e[0].required_capability() <= n.capability]
        tables[n.id] = ClassificationTable.build(usable)
    return tables


def dump_table(table: ClassificationTable) -> str:
    """One line per rule: index, predicate, actions, specificity."""
    lines = []
    for r in table.rules:
        acts = ",".join(str(a) for a in r.actions) or "forward"
        lines.append(f"{r.index:3d}  {r.predicate}  ->  {acts}  [spec={r.specificity()}]")
    default = "default -> forward at tos priority" if table.tos_default else "default -> forward at priority 0"
    lines.append(default)
    return "\n".join(lines)


def dump_rulesets(tables: dict[str, ClassificationTable], nodes: Iterable[NodeSpec]) -> str:
    caps = {n.id: n.capability for n in nodes}
    chunks = []
    for node_id in sorted(tables):
        chunks.append(f"# node {node_id} ({caps[node_id].name})\n{dump_table(tables[node_id])}")
    return "\n\n".join(chunks) + "\n"

