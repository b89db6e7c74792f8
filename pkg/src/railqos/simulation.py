"""Event-driven packet simulation of one scenario under one QoS scheme."""

from __future__ import annotations

import hashlib
import time as _time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .classification import (
    PolicerState,
    SetPriority,
    apply_actions,
    lookup,
    ruleset_for_scheme,
)
from .engine import EventKind, RngStream, Scheduler
from .metrics import FlowStats, HandshakeSummary, QosIndicatorReport, evaluate_indicators, extract_episodes
from .model import NS_PER_S, Packet, TosClass, TransportProtocol, default_priority
from .network import DropCause, Link, compute_routes
from .scenario import Scenario
from .traffic import Generator, HandshakeKind, HandshakeSession, session_starts

_TOS_PRIO = {t: default_priority(t) for t in TosClass}


@dataclass
class SimulationResult:
    scenario: Scenario
    stats: FlowStats
    generated: int
    delivered: int
    drops: Counter
    in_flight: int
    events: int
    wall_seconds: float
    monitors: dict[str, int]
    sessions: list[HandshakeSession]
    episodes: tuple[list[int], list[int]]
    tcmt_sessions: tuple[int, int]
    report: QosIndicatorReport
    generation_digests: dict[str, str]
    timeseries: list[tuple[int, str, int, int, Optional[float]]]
    link_traces: dict[str, list] = field(default_factory=dict)
    trace: Optional[list[tuple]] = None
    port_waits: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    @property
    def conservation_ok(self) -> bool:
        return self.generated == self.delivered + sum(self.drops.values()) + self.in_flight

    def handshake_summary(self, kind: HandshakeKind) -> HandshakeSummary:
        return HandshakeSummary.from_sessions(s for s in self.sessions if s.kind is kind)


class Simulation:
    """Builds runtime state from a scenario and runs it to completion.

    With `trace=True` every delivery and drop is logged as
    (time, "deliver"|"drop", app, cause, created_at) for offline audits.
    """

    def __init__(self, scenario: Scenario, trace: bool = False) -> None:
        self.scenario = sc = scenario
        self.sched = Scheduler()
        self.warmup = sc.warmup
        self.duration = sc.duration
        self.nodes = {n.id: n for n in sc.nodes}
        self.ip = {n.id: n.ip for n in sc.nodes}
        self.routes = compute_routes(sc.nodes, sc.links)
        profiles = sc.all_profiles()
        self.tables = ruleset_for_scheme(sc.scheme, profiles, sc.nodes)
        self._cache: dict[str, dict] = {n: {} for n in self.nodes}
        self.policers = PolicerState()

        self.links: dict[str, Link] = {}
        self.ports: dict[str, dict[str, object]] = defaultdict(dict)
        self.attached: dict[str, set[str]] = defaultdict(set)
        for spec in sc.links:
            rng = RngStream(sc.seed, f"impairment.{spec.id}") if spec.impairment is not None else None
            link = Link(spec, self._start_tx, rng)
            self.links[spec.id] = link
            for node, port in link.ports.items():
                self.ports[node][spec.id] = port
                self.attached[node].add(spec.id)

        self.stats = FlowStats()
        self.generated = 0
        self.delivered = 0
        self.drops: Counter = Counter()
        self._next_pid = 0
        self._gen_hash: dict[str, "hashlib._Hash"] = {}
        self._bins: dict[tuple[int, str], list] = {}
        self.trace: Optional[list[tuple]] = [] if trace else None
        self.tcmt_outcomes: dict[str, dict[int, bool]] = defaultdict(dict)
        self.sessions: list[HandshakeSession] = []
        self._session_rng: list[RngStream] = []
        self._session_spec = []

        s = self.sched
        s.on(EventKind.GENERATE, self._on_generate)
        s.on(EventKind.ARRIVE_AT_NODE, self._on_arrive)
        s.on(EventKind.TRANSMISSION_COMPLETE, self._on_tx_complete)
        s.on(EventKind.IMPAIRMENT_TRANSITION, self._on_impairment)
        s.on(EventKind.FORWARD_READY, self._forward)
        s.on(EventKind.HANDSHAKE_STEP, self._on_handshake_step)
        s.on(EventKind.HANDSHAKE_TIMEOUT, self._on_handshake_timeout)

        for prof in profiles:
            self.stats[prof.name]  # every configured application gets a row, even if silent
            for src in prof.sources:
                rng = RngStream(sc.seed, f"traffic.{prof.name}.{src}")
                gen = Generator(prof, src, self.ip[src], self.ip[prof.destination], rng, stop_at=sc.duration)
                t = gen.first_time()
                if t is not None:
                    s.schedule(t, EventKind.GENERATE, gen)

        for link in self.links.values():
            if link.impairment is not None:
                t = link.impairment.first_transition()
                if t is not None:
                    s.schedule(t, EventKind.IMPAIRMENT_TRANSITION, link)

        for spec in sc.handshakes:
            starts = session_starts(spec, RngStream(sc.seed, f"handshake.{spec.kind.value}"),
                                    sc.warmup, sc.duration - spec.timeout)
            for i, t in enumerate(starts):
                client = spec.sources[i % len(spec.sources)]
                sess = HandshakeSession(len(self.sessions), spec.kind, client, spec.destination,
                                        spec.round_trips, spec.timeout, spec.processing)
                self.sessions.append(sess)
                self._session_rng.append(RngStream(sc.seed, f"handshake.{spec.kind.value}.{i}"))
                self._session_spec.append(spec)
                s.schedule(t, EventKind.HANDSHAKE_STEP, sess)
                s.schedule(t + spec.timeout, EventKind.HANDSHAKE_TIMEOUT, sess)

    # -- packet plumbing ------------------------------------------------

    def _new_id(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    def _inject(self, p: Packet) -> None:
        self.generated += 1
        if p.created_at >= self.warmup:
            self.stats[p.app].sent += 1
        self._route(p, p.src_node, None, None)

    def _route(self, p: Packet, node: str, in_link: Optional[str], prev: Optional[str]) -> None:
        table = self.tables[node]
        next_link = None
        if not table.rules:
            p.priority = _TOS_PRIO[p.tos] if table.tos_default else 0
        else:
            key = (in_link, prev, p.app, p.src_ip, p.dst_ip, p.protocol, p.src_port, p.dst_port, p.tos)
            cache = self._cache[node]
            rule = cache.get(key, cache)
            if rule is cache:
                rule = cache[key] = lookup(table, p, in_link, self.nodes[node].capability, prev, node)
            if rule is None:
                p.priority = _TOS_PRIO[p.tos] if table.tos_default else 0
            elif len(rule.actions) == 1 and type(rule.actions[0]) is SetPriority:
                p.priority = rule.actions[0].level
            else:
                d = apply_actions(p, rule, table.tos_default, now=self.sched.now(), node=node,
                                  attached_links=self.attached[node], policers=self.policers)
                if d.policed:
                    self._drop(p, DropCause.POLICED)
                    return
                next_link = d.next_link
        delay = self.nodes[node].processing_delay
        if delay and in_link is not None:
            self.sched.schedule(self.sched.now() + delay, EventKind.FORWARD_READY, p, node, next_link)
        else:
            self._forward(p, node, next_link)

    def _forward(self, p: Packet, node: str, next_link: Optional[str]) -> None:
        link_id = next_link or self.routes[node][p.dst_node]
        port = self.ports[node][link_id]
        if port.enqueue(p, self.sched.now()) is DropCause.QUEUE_OVERFLOW:
            self._drop(p, DropCause.QUEUE_OVERFLOW)

    def _start_tx(self, port, p: Packet, done_at: int) -> None:
        self.sched.schedule(done_at, EventKind.TRANSMISSION_COMPLETE, port)

    def _on_tx_complete(self, port) -> None:
        now = self.sched.now()
        p = port.complete(now)
        link = self.links[port.link_id]
        if link.impairment is not None and link.impairment.bad:
            self._drop(p, DropCause.IMPAIRMENT)
            return
        self.sched.schedule(now + link.spec.propagation, EventKind.ARRIVE_AT_NODE, p, port.peer, port.link_id, port.node)

    def _on_arrive(self, p: Packet, node: str, in_link: str, prev: str) -> None:
        if node == p.dst_node:
            self._deliver(p)
            return
        p.ttl -= 1
        if p.ttl <= 0:
            self._drop(p, DropCause.TTL_EXPIRED)
            return
        self._route(p, node, in_link, prev)

    def _on_impairment(self, link: Link) -> None:
        nxt = link.impairment.step(self.sched.now())
        if nxt is not None:
            self.sched.schedule(nxt, EventKind.IMPAIRMENT_TRANSITION, link)

    # -- bookkeeping ----------------------------------------------------

    def _bin(self, now: int, app: str) -> list:
        key = (now // NS_PER_S, app)
        b = self._bins.get(key)
        if b is None:
            b = self._bins[key] = [0, 0, 0, 0]
        return b

    def _deliver(self, p: Packet) -> None:
        now = self.sched.now()
        self.delivered += 1
        if self.trace is not None:
            self.trace.append((now, "deliver", p.app, None, p.created_at))
        if p.session is not None:
            self._handshake_packet(p, now)
        if p.created_at < self.warmup:
            return
        st = self.stats[p.app]
        st.delivered += 1
        b = self._bin(now, p.app)
        b[0] += 1
        if p.last_segment:
            d = now - p.created_at
            st.delays.append(d)
            b[2] += d
            b[3] += 1
        if p.app == "tcmt":
            self.tcmt_outcomes[p.src_node][p.msg_id] = True

    def _drop(self, p: Packet, cause: DropCause) -> None:
        now = self.sched.now()
        self.drops[cause] += 1
        if self.trace is not None:
            self.trace.append((now, "drop", p.app, cause, p.created_at))
        if p.created_at < self.warmup:
            return
        self.stats[p.app].drops[cause] += 1
        self._bin(now, p.app)[1] += 1
        if p.app == "tcmt":
            self.tcmt_outcomes[p.src_node][p.msg_id] = False

    def _on_generate(self, gen: Generator) -> None:
        now = self.sched.now()
        packets, nxt = gen.next_packet(now, self._new_id)
        h = self._gen_hash.get(gen.profile.name)
        if h is None:
            h = self._gen_hash[gen.profile.name] = hashlib.sha256()
        h.update(f"{gen.node}:{now};".encode())
        for p in packets:
            self._inject(p)
        if nxt is not None:
            self.sched.schedule(nxt, EventKind.GENERATE, gen)

    # -- handshakes -----------------------------------------------------

    def _on_handshake_step(self, sess: HandshakeSession) -> None:
        if sess.outcome is not None:
            return
        now = self.sched.now()
        if sess.start is None:
            sess.begin(now)
        spec = self._session_spec[sess.id]
        src, dst = sess.direction()
        p = Packet(
            id=self._new_id(), app=f"handshake.{sess.kind.value}", src_node=src, dst_node=dst,
            src_ip=self.ip[src], dst_ip=self.ip[dst], src_port=spec.dst_port, dst_port=spec.dst_port,
            protocol=TransportProtocol.UDP, tos=TosClass.EF, size_bytes=spec.packet_bytes, created_at=now,
            msg_id=sess.step, session=sess.id,
        )
        self._inject(p)

    def _handshake_packet(self, p: Packet, now: int) -> None:
        sess = self.sessions[p.session]
        if sess.outcome is not None or p.msg_id != sess.step:
            return
        wait = sess.on_receive(now, self._session_rng[sess.id])
        if wait is not None:
            self.sched.schedule(now + wait, EventKind.HANDSHAKE_STEP, sess)

    def _on_handshake_timeout(self, sess: HandshakeSession) -> None:
        sess.on_timeout(self.sched.now())

    # -- run ------------------------------------------------------------

    def in_flight(self) -> int:
        count = 0
        for node_ports in self.ports.values():
            for port in node_ports.values():
                count += port.queued() + (1 if port.busy else 0)
        for ev in self.sched.pending():
            if ev.kind in (EventKind.ARRIVE_AT_NODE, EventKind.FORWARD_READY):
                count += 1
        return count

    def _tcmt_sessions(self) -> tuple[int, int]:
        if self.scenario.tcmt is None:
            return 0, 0
        run_needed = self.scenario.tcmt.failure_run
        failed = 0
        sources = self.scenario.tcmt.sources
        for src in sources:
            outcomes = self.tcmt_outcomes.get(src, {})
            run = 0
            for msg in sorted(outcomes):
                run = 0 if outcomes[msg] else run + 1
                if run >= run_needed:
                    failed += 1
                    break
        return failed, len(sources)

    def monitors(self) -> dict[str, int]:
        totals = Counter()
        for node_ports in self.ports.values():
            for port in node_ports.values():
                totals["priority_violations"] += port.priority_violations
                totals["fifo_violations"] += port.fifo_violations
                totals["idle_violations"] += port.idle_violations
        totals["event_order_violations"] = self.sched.order_violations
        return dict(totals)

    def run(self) -> SimulationResult:
        t0 = _time.perf_counter()
        events = self.sched.run_until(self.duration)
        wall = _time.perf_counter() - t0

        t_ti, t_rec = [], []
        traces = {}
        for lid in sorted(self.links):
            imp = self.links[lid].impairment
            if imp is None:
                continue
            traces[lid] = list(imp.trace)
            ti, rec = extract_episodes(imp.trace, self.duration)
            t_ti.extend(ti)
            t_rec.extend(rec)

        est = HandshakeSummary.from_sessions(s for s in self.sessions if s.kind is HandshakeKind.CONNECTION_ESTABLISHMENT)
        reg = HandshakeSummary.from_sessions(s for s in self.sessions if s.kind is HandshakeKind.NETWORK_REGISTRATION)
        conn = self._tcmt_sessions()
        tcmt_delays = self.stats["tcmt"].delays if "tcmt" in self.stats else []
        report = evaluate_indicators(tcmt_delays, (t_ti, t_rec), est, reg, conn)

        series = []
        for (sec, app), (dlv, drp, dsum, dcnt) in sorted(self._bins.items()):
            series.append((sec, app, dlv, drp, dsum / dcnt / NS_PER_S if dcnt else None))

        waits = {}
        for node, node_ports in self.ports.items():
            for lid, port in node_ports.items():
                waits[(node, lid)] = (port.wait_total, port.dequeued)

        return SimulationResult(
            scenario=self.scenario, stats=self.stats, generated=self.generated, delivered=self.delivered,
            drops=Counter(self.drops), in_flight=self.in_flight(), events=events, wall_seconds=wall,
            monitors=self.monitors(), sessions=self.sessions, episodes=(t_ti, t_rec), tcmt_sessions=conn,
            report=report, generation_digests={k: h.hexdigest() for k, h in sorted(self._gen_hash.items())},
            timeseries=series, link_traces=traces, trace=self.trace, port_waits=waits,
        )


def simulate(scenario: Scenario, trace: bool = False) -> SimulationResult:
    return Simulation(scenario, trace=trace).run()
