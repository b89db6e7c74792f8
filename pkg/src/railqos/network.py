"""Topology, min-hop routing, output-port queueing and link impairment."""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .engine import RngStream
from .model import MAX_PRIORITY, NS_PER_S, Packet


class NodeKind(enum.Enum):
    CLIENT = "client"
    SERVER = "server"
    SWITCH = "switch"
    ROUTER = "router"

    @property
    def is_host(self) -> bool:
        return self in (NodeKind.CLIENT, NodeKind.SERVER)


class Capability(enum.IntEnum):
    """Highest header layer a node's classifier can inspect."""

    L2 = 2
    L3 = 3
    L4 = 4
    L7 = 7


class DropCause(enum.Enum):
    QUEUE_OVERFLOW = "queue_overflow"
    IMPAIRMENT = "impairment"
    TTL_EXPIRED = "ttl_expired"
    POLICED = "policed"


class DisconnectedTopology(ValueError):
    def __init__(self, pairs: list[tuple[str, str]]):
        self.pairs = pairs
        shown = ", ".join(f"{a}->{b}" for a, b in pairs[:10])
        more = f" (+{len(pairs) - 10} more)" if len(pairs) > 10 else ""
        super().__init__(f"unreachable node pairs: {shown}{more}")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: NodeKind
    capability: Capability = Capability.L2
    ip: int = 0
    processing_delay: int = 0

    def __post_init__(self) -> None:
        if self.kind is NodeKind.ROUTER and self.capability < Capability.L3:
            raise ValueError(f"router {self.id} needs capability >= L3")


@dataclass(frozen=True)
class ImpairmentParams:
    """On/off interference process for a link.

    With `transitions` empty, holding times are exponential with the given
    means. A non-empty `transitions` tuple replaces the random process by a
    fixed list of toggle instants (ns), starting from Good.
    """

    mean_good: int = 0
    mean_bad: int = 0
    transitions: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.transitions:
            if any(b <= a for a, b in zip(self.transitions, self.transitions[1:])):
                raise ValueError("scripted transitions must be strictly increasing")
            if self.transitions[0] <= 0:
                raise ValueError("scripted transitions must be > 0")
        elif self.mean_good <= 0 or self.mean_bad <= 0:
            raise ValueError("impairment means must be positive")


@dataclass(frozen=True)
class LinkSpec:
    id: str
    a: str
    b: str
    bandwidth_bps: int
    propagation: int = 0
    queue_capacity_pkts: int = 100
    impairment: Optional[ImpairmentParams] = None

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if self.queue_capacity_pkts < 1:
            raise ValueError("queue capacity must be >= 1")
        if self.a == self.b:
            raise ValueError("link endpoints must be distinct")

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


def tx_time(size_bytes: int, bandwidth_bps: int) -> int:
    """Serialization delay in ns, rounded half-up to the nearest ns."""
    num = size_bytes * 8 * NS_PER_S
    return (2 * num + bandwidth_bps) // (2 * bandwidth_bps)


RoutingTable = dict[str, dict[str, str]]


def compute_routes(nodes: Iterable[NodeSpec], links: Iterable[LinkSpec]) -> RoutingTable:
    """Min-hop next-hop link for every (node, destination) pair.

    Hosts never forward transit traffic. Among equally short next hops the
    lowest neighbor id wins, then the lowest link id.
    """
    nodes = list(nodes)
    links = list(links)
    by_id = {n.id: n for n in nodes}
    adj: dict[str, list[tuple[str, str]]] = {n.id: [] for n in nodes}
    for link in links:
        adj[link.a].append((link.b, link.id))
        adj[link.b].append((link.a, link.id))

    table: RoutingTable = {n.id: {} for n in nodes}
    for dst in by_id:
        dist = _bfs_distances(dst, adj, by_id)
        for node, d in dist.items():
            if node == dst:
                continue
            best: Optional[tuple[str, str]] = None
            for nbr, link_id in adj[node]:
                if dist.get(nbr) != d - 1:
                    continue
                if nbr != dst and by_id[nbr].kind.is_host:
                    continue
                cand = (nbr, link_id)
                if best is None or cand < best:
                    best = cand
            if best is not None:
                table[node][dst] = best[1]

    hosts = [n for n in nodes if n.kind.is_host]
    clients = [n.id for n in hosts if n.kind is NodeKind.CLIENT]
    servers = [n.id for n in hosts if n.kind is NodeKind.SERVER]
    if clients and servers:
        required = [(c, s) for c in clients for s in servers] + [(s, c) for s in servers for c in clients]
    elif hosts:
        required = [(a.id, b.id) for a in hosts for b in hosts if a.id != b.id]
    else:
        required = [(a.id, b.id) for a in nodes for b in nodes if a.id != b.id]
    missing = [(a, b) for a, b in required if b not in table[a]]
    if missing:
        raise DisconnectedTopology(sorted(missing))
    return table


def _bfs_distances(dst: str, adj, by_id) -> dict[str, int]:
    dist = {dst: 0}
    frontier = deque([dst])
    while frontier:
        u = frontier.popleft()
        # a host reached from the destination side cannot relay further
        if u != dst and by_id[u].kind.is_host:
            continue
        for v, _ in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist


def bfs_hops(src: str, dst: str, links: Iterable[LinkSpec], nodes: Iterable[NodeSpec]) -> int:
    """Plain BFS hop count between two nodes (hosts do not relay)."""
    by_id = {n.id: n for n in nodes}
    adj: dict[str, list[str]] = {n: [] for n in by_id}
    for link in links:
        adj[link.a].append(link.b)
        adj[link.b].append(link.a)
    seen = {src: 0}
    frontier = deque([src])
    while frontier:
        u = frontier.popleft()
        if u == dst:
            return seen[u]
        if u != src and by_id[u].kind.is_host:
            continue
        for v in adj[u]:
            if v not in seen:
                seen[v] = seen[u] + 1
                frontier.append(v)
    raise DisconnectedTopology([(src, dst)])


class Accepted(enum.Enum):
    ACCEPTED = "accepted"


ACCEPTED = Accepted.ACCEPTED


class OutputPort:
    """One direction of a link: per-priority FIFO queues plus a transmitter.

    `start_tx(port, packet, done_at)` is called whenever a packet begins
    service; the owner must call `complete(now)` at `done_at`.
    """

    def __init__(
        self,
        link_id: str,
        node: str,
        peer: str,
        bandwidth_bps: int,
        capacity: int,
        start_tx: Optional[Callable[["OutputPort", Packet, int], None]] = None,
    ) -> None:
        self.link_id = link_id
        self.node = node
        self.peer = peer
        self.bandwidth_bps = bandwidth_bps
        self.capacity = capacity
        self.queues: list[deque] = [deque() for _ in range(MAX_PRIORITY + 1)]
        self.busy = False
        self.busy_until = 0
        self.in_service: Optional[Packet] = None
        self.drops: Counter = Counter()
        self.start_tx = start_tx
        self._enq_seq = 0
        self._last_deq_seq = [-1] * (MAX_PRIORITY + 1)
        self.wait_total = 0
        self.dequeued = 0
        self.priority_violations = 0
        self.fifo_violations = 0
        self.idle_violations = 0

    def queued(self) -> int:
        return sum(len(q) for q in self.queues)

    def enqueue(self, p: Packet, now: int):
        """Tail-drop enqueue. Returns ACCEPTED or DropCause.QUEUE_OVERFLOW."""
        q = self.queues[p.priority]
        if len(q) >= self.capacity:
            self.drops[DropCause.QUEUE_OVERFLOW] += 1
            return DropCause.QUEUE_OVERFLOW
        q.append((p, self._enq_seq, now))
        self._enq_seq += 1
        if not self.busy:
            self._serve_next(now)
        return ACCEPTED

    def dequeue_next(self, now: int = 0) -> Optional[Packet]:
        """Pop the head of the highest-priority nonempty queue."""
        queues = self.queues
        for level in range(MAX_PRIORITY, -1, -1):
            q = queues[level]
            if q:
                p, seq, enq_at = q.popleft()
                if seq <= self._last_deq_seq[level]:
                    self.fifo_violations += 1
                self._last_deq_seq[level] = seq
                for higher in range(level + 1, MAX_PRIORITY + 1):
                    if queues[higher]:
                        self.priority_violations += 1
                        break
                self.wait_total += now - enq_at
                self.dequeued += 1
                return p
        return None

    def _serve_next(self, now: int) -> None:
        p = self.dequeue_next(now)
        if p is None:
            self.busy = False
            self.in_service = None
            return
        self.busy = True
        self.in_service = p
        self.busy_until = now + tx_time(p.size_bytes, self.bandwidth_bps)
        if self.start_tx is not None:
            self.start_tx(self, p, self.busy_until)

    def complete(self, now: int) -> Packet:
        """Finish the in-service packet and start the next one, if any."""
        done = self.in_service
        if done is None:
            raise RuntimeError(f"port {self.node}->{self.peer} completed while idle")
        self._serve_next(now)
        if not self.busy and self.queued():
            self.idle_violations += 1
        return done


class ImpairmentState(enum.Enum):
    GOOD = "good"
    BAD = "bad"


@dataclass
class LinkImpairment:
    """Two-state Good/Bad process attached to a link.

    `trace` records every (time, new_state), starting with (0, GOOD).
    """

    params: ImpairmentParams
    rng: Optional[RngStream] = None
    state: ImpairmentState = ImpairmentState.GOOD
    trace: list[tuple[int, ImpairmentState]] = field(default_factory=lambda: [(0, ImpairmentState.GOOD)])
    _script_pos: int = 0

    @property
    def bad(self) -> bool:
        return self.state is ImpairmentState.BAD

    def first_transition(self) -> Optional[int]:
        return self._next_time(0)

    def step(self, now: int) -> Optional[int]:
        """Toggle state at `now`; return the time of the next transition."""
        self.state = ImpairmentState.BAD if self.state is ImpairmentState.GOOD else ImpairmentState.GOOD
        self.trace.append((now, self.state))
        return self._next_time(now)

    def _next_time(self, now: int) -> Optional[int]:
        script = self.params.transitions
        if script:
            if self._script_pos >= len(script):
                return None
            t = script[self._script_pos]
            self._script_pos += 1
            return t
        if self.rng is None:
            raise RuntimeError("random impairment needs an rng stream")
        mean = self.params.mean_bad if self.state is ImpairmentState.BAD else self.params.mean_good
        hold = int(round(self.rng.rng.expovariate(1.0 / mean)))
        return now + max(hold, 1)


def impairment_step(imp: LinkImpairment, now: int) -> Optional[int]:
    return imp.step(now)


class Link:
    """Runtime state of a full-duplex link: two output ports, shared impairment."""

    def __init__(self, spec: LinkSpec, start_tx=None, rng: Optional[RngStream] = None) -> None:
        self.spec = spec
        self.ports = {
            spec.a: OutputPort(spec.id, spec.a, spec.b, spec.bandwidth_bps, spec.queue_capacity_pkts, start_tx),
            spec.b: OutputPort(spec.id, spec.b, spec.a, spec.bandwidth_bps, spec.queue_capacity_pkts, start_tx),
        }
        self.impairment = LinkImpairment(spec.impairment, rng) if spec.impairment is not None else None

    @property
    def bad(self) -> bool:
        return self.impairment is not None and self.impairment.bad
