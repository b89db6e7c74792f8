"""Scenario model, JSON parsing/emission, validation and built-in presets."""

from __future__ import annotations

import copy
import hashlib
import ipaddress
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Union

from .classification import QosScheme
from .engine import InvalidDistribution, dist_from_dict, dist_to_dict
from .model import TosClass, TransportProtocol, seconds, to_seconds
from .network import Capability, ImpairmentParams, LinkSpec, NodeKind, NodeSpec
from .traffic import (
    ApplicationProfile,
    HandshakeKind,
    HandshakeSpec,
    OnOff,
    TcmtProfile,
    bulk_profile,
    establishment_spec,
    figure3_profiles,
    registration_spec,
    tcmt_profile,
)

E1_BPS = 2_048_000
TEN_BASE_T_BPS = 10_000_000


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else (f"{field}: " if field else "")
        super().__init__(where + message)


class ValidationError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    profiles: tuple[ApplicationProfile, ...] = ()
    tcmt: Optional[TcmtProfile] = None
    handshakes: tuple[HandshakeSpec, ...] = ()
    scheme: QosScheme = QosScheme.COMPREHENSIVE
    seed: int = 42
    duration: int = seconds(300)
    warmup: int = seconds(30)
    name: str = "scenario"

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def all_profiles(self) -> list[ApplicationProfile]:
        profiles = list(self.profiles)
        if self.tcmt is not None:
            profiles.append(self.tcmt.as_profile())
        return profiles

    def count(self, kind: NodeKind) -> int:
        return sum(1 for n in self.nodes if n.kind is kind)


# --- emission -------------------------------------------------------------

def _ip_str(ip: int) -> str:
    return str(ipaddress.IPv4Address(ip))


def _profile_dict(p: ApplicationProfile) -> dict:
    d: dict[str, Any] = {
        "name": p.name,
        "protocol": p.protocol.value,
        "dst_port": p.dst_port,
        "tos": p.tos.name,
        "message_size": dist_to_dict(p.message_size),
        "inter_arrival": dist_to_dict(p.inter_arrival),
        "sources": list(p.sources),
        "destination": p.destination,
        "mtu": p.mtu,
    }
    if p.src_port is not None:
        d["src_port"] = p.src_port
    if p.port_priority is not None:
        d["port_priority"] = p.port_priority
    if p.session is not None:
        d["session"] = {"on": dist_to_dict(p.session.on), "off": dist_to_dict(p.session.off)}
    if p.start is not None:
        d["start"] = dist_to_dict(p.start)
    return d


def scenario_to_dict(s: Scenario) -> dict:
    links = []
    for link in s.links:
        d: dict[str, Any] = {
            "id": link.id, "a": link.a, "b": link.b, "bandwidth_bps": link.bandwidth_bps,
            "propagation_s": to_seconds(link.propagation), "queue_capacity_pkts": link.queue_capacity_pkts,
        }
        imp = link.impairment
        if imp is not None:
            if imp.transitions:
                d["impairment"] = {"transitions_s": [to_seconds(t) for t in imp.transitions]}
            else:
                d["impairment"] = {"mean_good_s": to_seconds(imp.mean_good), "mean_bad_s": to_seconds(imp.mean_bad)}
        links.append(d)
    out: dict[str, Any] = {
        "name": s.name,
        "scheme": s.scheme.value,
        "seed": s.seed,
        "duration_s": to_seconds(s.duration),
        "warmup_s": to_seconds(s.warmup),
        "nodes": [{"id": n.id, "kind": n.kind.value, "capability": n.capability.name, "ip": _ip_str(n.ip),
                   "processing_delay_s": to_seconds(n.processing_delay)} for n in s.nodes],
        "links": links,
        "profiles": [_profile_dict(p) for p in s.profiles],
        "handshakes": [{
            "kind": h.kind.value, "count": h.count, "sources": list(h.sources), "destination": h.destination,
            "round_trips": h.round_trips, "processing": dist_to_dict(h.processing),
            "timeout_s": to_seconds(h.timeout), "dst_port": h.dst_port, "packet_bytes": h.packet_bytes,
        } for h in s.handshakes],
    }
    if s.tcmt is not None:
        t = s.tcmt
        out["tcmt"] = {"sources": list(t.sources), "destination": t.destination, "message_bytes": t.message_bytes,
                       "period_s": float(t.period), "dst_port": t.dst_port, "failure_run": t.failure_run}
    return out


def emit_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def scenario_digest(s: Scenario) -> str:
    canonical = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# --- parsing ----------------------------------------------------------------

class _Collector:
    """Gathers validation messages instead of stopping at the first one."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def err(self, msg: str) -> None:
        self.errors.append(msg)

    def get(self, d: dict, key: str, where: str, kind=None, default: Any = ..., positive=False, nonneg=False):
        if key not in d:
            if default is ...:
                self.err(f"{where}: missing field '{key}'")
            return None if default is ... else default
        value = d[key]
        if kind is not None:
            kinds = kind if isinstance(kind, tuple) else (kind,)
            if isinstance(value, bool) or not isinstance(value, kinds):
                self.err(f"{where}: field '{key}' must be {'/'.join(k.__name__ for k in kinds)}")
                return None
        if positive and value is not None and not value > 0:
            self.err(f"{where}: '{key}' must be positive")
            return None
        if nonneg and value is not None and value < 0:
            self.err(f"{where}: '{key}' must be >= 0")
            return None
        return value

    def enum(self, cls, value, where: str, by_name=False):
        if value is None:
            return None
        try:
            return cls[value] if by_name else cls(value)
        except (KeyError, ValueError):
            self.err(f"{where}: unknown {cls.__name__} {value!r}")
            return None

    def dist(self, d: dict, key: str, where: str, required=True):
        if key not in d or d[key] is None:
            if required:
                self.err(f"{where}: missing distribution '{key}'")
            return None
        try:
            return dist_from_dict(d[key])
        except InvalidDistribution as exc:
            self.err(f"{where}.{key}: {exc}")
        except (KeyError, TypeError, ValueError) as exc:
            self.err(f"{where}.{key}: malformed distribution ({exc})")
        return None

    def ip(self, value, where: str) -> int:
        try:
            return int(ipaddress.IPv4Address(value))
        except (ipaddress.AddressValueError, ValueError, TypeError):
            self.err(f"{where}: bad IPv4 address {value!r}")
            return 0


_NUM = (int, float)


def _parse_nodes(raw, c: _Collector) -> list[NodeSpec]:
    nodes = []
    seen = set()
    for i, d in enumerate(raw or []):
        where = f"nodes[{i}]"
        nid = c.get(d, "id", where, str)
        kind = c.enum(NodeKind, c.get(d, "kind", where, str), where)
        default_cap = "L3" if kind is NodeKind.ROUTER else "L2"
        cap = c.enum(Capability, c.get(d, "capability", where, str, default=default_cap), where, by_name=True)
        ip = c.ip(d.get("ip", "0.0.0.0"), where)
        proc = c.get(d, "processing_delay_s", where, _NUM, default=0.0, nonneg=True)
        if nid is not None:
            if nid in seen:
                c.err(f"{where}: duplicate node id {nid!r}")
            seen.add(nid)
        if kind is NodeKind.ROUTER and cap is not None and cap < Capability.L3:
            c.err(f"{where}: router {nid!r} needs capability >= L3")
            cap = None
        if None not in (nid, kind, cap, proc):
            nodes.append(NodeSpec(nid, kind, cap, ip, seconds(proc)))
    return nodes


def _parse_links(raw, node_ids: set, c: _Collector) -> list[LinkSpec]:
    links = []
    seen = set()
    for i, d in enumerate(raw or []):
        where = f"links[{i}]"
        lid = c.get(d, "id", where, str)
        a = c.get(d, "a", where, str)
        b = c.get(d, "b", where, str)
        bw = c.get(d, "bandwidth_bps", where, int)
        if bw is not None and bw <= 0:
            c.err(f"{where}: bandwidth must be positive")
            bw = None
        prop = c.get(d, "propagation_s", where, _NUM, default=0.0, nonneg=True)
        cap = c.get(d, "queue_capacity_pkts", where, int, default=100)
        if cap is not None and cap < 1:
            c.err(f"{where}: queue capacity must be >= 1")
            cap = None
        if lid is not None:
            if lid in seen:
                c.err(f"{where}: duplicate link id {lid!r}")
            seen.add(lid)
        for end in (a, b):
            if end is not None and end not in node_ids:
                c.err(f"{where}: unknown node {end!r}")
        if a is not None and a == b:
            c.err(f"{where}: endpoints must be distinct")
        imp = None
        ok = True
        if d.get("impairment") is not None:
            imp, ok = _parse_impairment(d["impairment"], where + ".impairment", c)
        if ok and None not in (lid, a, b, bw, prop, cap) and a != b and a in node_ids and b in node_ids:
            links.append(LinkSpec(lid, a, b, bw, seconds(prop), cap, imp))
    return links


def _parse_impairment(d, where: str, c: _Collector):
    if "transitions_s" in d:
        ts = d["transitions_s"]
        if not isinstance(ts, list) or not all(isinstance(t, _NUM) for t in ts):
            c.err(f"{where}: transitions_s must be a list of numbers")
            return None, False
        try:
            return ImpairmentParams(transitions=tuple(seconds(t) for t in ts)), True
        except ValueError as exc:
            c.err(f"{where}: {exc}")
            return None, False
    good = c.get(d, "mean_good_s", where, _NUM, positive=True)
    bad = c.get(d, "mean_bad_s", where, _NUM, positive=True)
    if good is None or bad is None:
        return None, False
    return ImpairmentParams(seconds(good), seconds(bad)), True


def _check_endpoints(where: str, sources, destination, nodes: dict, c: _Collector) -> bool:
    ok = True
    if not isinstance(sources, list) or not sources:
        c.err(f"{where}: 'sources' must be a non-empty list")
        return False
    for s in sources + [destination]:
        if s not in nodes:
            c.err(f"{where}: unknown node {s!r}")
            ok = False
        elif not nodes[s].kind.is_host:
            c.err(f"{where}: node {s!r} is a {nodes[s].kind.value}, traffic endpoints must be hosts")
            ok = False
    return ok


def _port(c: _Collector, d: dict, key: str, where: str, default: Any = ...):
    v = c.get(d, key, where, int, default=default)
    if v is not None and not 0 <= v <= 0xFFFF:
        c.err(f"{where}: '{key}' outside 0..65535")
        return None
    return v


def _parse_profiles(raw, nodes: dict, c: _Collector) -> list[ApplicationProfile]:
    out = []
    for i, d in enumerate(raw or []):
        where = f"profiles[{i}]"
        name = c.get(d, "name", where, str)
        proto = c.enum(TransportProtocol, c.get(d, "protocol", where, str), where)
        tos = c.enum(TosClass, c.get(d, "tos", where, str), where, by_name=True)
        dst_port = _port(c, d, "dst_port", where)
        src_port = _port(c, d, "src_port", where, default=None)
        size = c.dist(d, "message_size", where)
        gap = c.dist(d, "inter_arrival", where)
        start = c.dist(d, "start", where, required=False)
        mtu = c.get(d, "mtu", where, int, default=1500, positive=True)
        prio = c.get(d, "port_priority", where, int, default=None)
        if prio is not None and not 0 <= prio <= 7:
            c.err(f"{where}: port_priority outside 0..7")
            prio = None
        session = None
        if d.get("session") is not None:
            on = c.dist(d["session"], "on", where + ".session")
            off = c.dist(d["session"], "off", where + ".session")
            session = OnOff(on, off) if on is not None and off is not None else None
        if size is not None and getattr(size, "high", getattr(size, "value", 1)) < 1:
            c.err(f"{where}: message_size support must reach >= 1 byte")
        sources = d.get("sources")
        dest = d.get("destination")
        ends_ok = _check_endpoints(where, sources, dest, nodes, c)
        if None not in (name, proto, tos, dst_port, size, gap, mtu) and ends_ok:
            out.append(ApplicationProfile(name, proto, dst_port, tos, size, gap, tuple(sources), dest,
                                          session=session, src_port=src_port, mtu=mtu, port_priority=prio,
                                          start=start))
    return out


def _parse_tcmt(d, nodes: dict, c: _Collector) -> Optional[TcmtProfile]:
    where = "tcmt"
    size = c.get(d, "message_bytes", where, int, default=128, positive=True)
    period = c.get(d, "period_s", where, _NUM, default=0.5, positive=True)
    port = _port(c, d, "dst_port", where, default=3000)
    run = c.get(d, "failure_run", where, int, default=3, positive=True)
    ok = _check_endpoints(where, d.get("sources"), d.get("destination"), nodes, c)
    if ok and None not in (size, period, port, run):
        return TcmtProfile(tuple(d["sources"]), d["destination"], size, float(period), port, run)
    return None


def _parse_handshakes(raw, nodes: dict, c: _Collector) -> list[HandshakeSpec]:
    out = []
    for i, d in enumerate(raw or []):
        where = f"handshakes[{i}]"
        kind = c.enum(HandshakeKind, c.get(d, "kind", where, str), where)
        count = c.get(d, "count", where, int, nonneg=True)
        rt = c.get(d, "round_trips", where, int, default=3, positive=True)
        proc = c.dist(d, "processing", where)
        timeout = c.get(d, "timeout_s", where, _NUM, positive=True)
        port = _port(c, d, "dst_port", where, default=3001)
        size = c.get(d, "packet_bytes", where, int, default=100, positive=True)
        ok = _check_endpoints(where, d.get("sources"), d.get("destination"), nodes, c)
        if ok and None not in (kind, count, rt, proc, timeout, port, size):
            out.append(HandshakeSpec(kind, count, tuple(d["sources"]), d["destination"], rt, proc,
                                     seconds(timeout), port, size))
    return out


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ParseError("scenario must be a JSON object")
    if "preset" in data:
        data = _apply_preset(data)
    c = _Collector()
    nodes = _parse_nodes(data.get("nodes"), c)
    if not data.get("nodes"):
        c.err("scenario: 'nodes' must be a non-empty list")
    by_id = {n.id: n for n in nodes}
    links = _parse_links(data.get("links"), set(by_id), c)
    profiles = _parse_profiles(data.get("profiles"), by_id, c)
    tcmt = _parse_tcmt(data["tcmt"], by_id, c) if data.get("tcmt") is not None else None
    handshakes = _parse_handshakes(data.get("handshakes"), by_id, c)
    scheme = None
    try:
        scheme = QosScheme.parse(str(data.get("scheme", "comprehensive")))
    except ValueError:
        c.err(f"scenario: unknown scheme {data.get('scheme')!r}")
    seed = c.get(data, "seed", "scenario", int, default=42)
    duration = c.get(data, "duration_s", "scenario", _NUM, default=300.0, positive=True)
    warmup = c.get(data, "warmup_s", "scenario", _NUM, default=0.0, nonneg=True)
    if duration is not None and warmup is not None and not duration > warmup:
        c.err("scenario: duration must exceed warmup")
    names = [p.name for p in profiles] + (["tcmt"] if tcmt else [])
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        c.err(f"scenario: duplicate profile names {dupes}")
    if c.errors:
        raise ValidationError(c.errors)
    return Scenario(tuple(nodes), tuple(links), tuple(profiles), tcmt, tuple(handshakes), scheme, seed,
                    seconds(duration), seconds(warmup), str(data.get("name", "scenario")))


def _merge_by(base: list, overrides: list, key: str) -> list:
    merged = [copy.deepcopy(b) for b in base]
    index = {b.get(key): i for i, b in enumerate(merged)}
    for o in overrides:
        if o.get(key) in index:
            merged[index[o[key]]].update(o)
        else:
            merged.append(o)
    return merged


def _apply_preset(data: dict) -> dict:
    name = data["preset"]
    if name not in PRESETS:
        raise ValidationError([f"scenario: unknown preset {name!r} (known: {sorted(PRESETS)})"])
    base = scenario_to_dict(PRESETS[name]())
    for key, value in data.items():
        if key == "preset":
            continue
        if key in ("nodes", "links") and isinstance(value, list):
            base[key] = _merge_by(base[key], value, "id")
        elif key == "profiles" and isinstance(value, list):
            base[key] = _merge_by(base[key], value, "name")
        else:
            base[key] = value
    return base


def parse_scenario(source: Union[str, Path]) -> Scenario:
    """Read and validate a scenario JSON file."""
    path = Path(source)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return scenario_from_dict(data)


# --- presets ----------------------------------------------------------------

CLIENTS = tuple(f"client{i}" for i in range(1, 9))


def figure3_topology(impairment: Optional[ImpairmentParams] = None,
                     impair: str = "none") -> tuple[tuple[NodeSpec, ...], tuple[LinkSpec, ...]]:
    """2 servers, 3 routers, 4 switches, 8 clients.

    Two clients per switch; switches 1-2 uplink to router1, 3-4 to router2;
    router1 and router2 reach router3 over E1 links; both servers hang off
    router3. `impair` is "none", "core" (E1 links) or "all".
    """
    nodes = []
    for i, cid in enumerate(CLIENTS):
        sw = i // 2 + 1
        nodes.append(NodeSpec(cid, NodeKind.CLIENT, Capability.L2, int(ipaddress.IPv4Address(f"10.0.{sw}.{i + 1}"))))
    for s in range(1, 5):
        nodes.append(NodeSpec(f"switch{s}", NodeKind.SWITCH, Capability.L2,
                              int(ipaddress.IPv4Address(f"10.254.0.{s}"))))
    for r in range(1, 4):
        nodes.append(NodeSpec(f"router{r}", NodeKind.ROUTER, Capability.L7,
                              int(ipaddress.IPv4Address(f"10.255.0.{r}"))))
    for s in range(1, 3):
        nodes.append(NodeSpec(f"server{s}", NodeKind.SERVER, Capability.L2,
                              int(ipaddress.IPv4Address(f"10.0.100.{s}"))))

    access_prop = seconds(5e-6)
    e1_prop = seconds(1e-3)

    def imp(core: bool):
        if impairment is None or impair == "none":
            return None
        if impair == "all" or (impair == "core" and core):
            return impairment
        return None

    links = []
    for i, cid in enumerate(CLIENTS):
        links.append(LinkSpec(f"acc{i + 1}", cid, f"switch{i // 2 + 1}", TEN_BASE_T_BPS, access_prop, 100, imp(False)))
    for s in range(1, 5):
        links.append(LinkSpec(f"up{s}", f"switch{s}", "router1" if s <= 2 else "router2", TEN_BASE_T_BPS,
                              access_prop, 100, imp(False)))
    links.append(LinkSpec("e1a", "router1", "router3", E1_BPS, e1_prop, 100, imp(True)))
    links.append(LinkSpec("e1b", "router2", "router3", E1_BPS, e1_prop, 100, imp(True)))
    for s in range(1, 3):
        links.append(LinkSpec(f"srv{s}", "router3", f"server{s}", TEN_BASE_T_BPS, access_prop, 100, imp(False)))
    return tuple(nodes), tuple(links)


def figure3_scenario(seed: int = 42, duration: float = 300.0, warmup: float = 30.0,
                     scheme: QosScheme = QosScheme.COMPREHENSIVE) -> Scenario:
    """The mixed-application workload over the three-router topology.

    Besides the four named applications every client runs a bursty bulk UDP
    transfer marked EF by the host (see `traffic.bulk_profile`).
    """
    nodes, links = figure3_topology()
    profiles = tuple(figure3_profiles(CLIENTS)) + (bulk_profile(CLIENTS),)
    return Scenario(nodes, links, profiles, None, (), scheme, seed, seconds(duration), seconds(warmup), "figure3")


def tcmt_scenario(seed: int = 42, duration: float = 300.0, warmup: float = 30.0,
                  scheme: QosScheme = QosScheme.COMPREHENSIVE, mean_good: float = 100.0,
                  mean_bad: float = 0.3) -> Scenario:
    """Train-control messages and handshakes over the lightly impaired,
    otherwise unloaded figure-3 network."""
    params = ImpairmentParams(seconds(mean_good), seconds(mean_bad))
    nodes, links = figure3_topology(params, impair="all")
    handshakes = (establishment_spec(CLIENTS, "server1"), registration_spec(CLIENTS, "server1"))
    return Scenario(nodes, links, (), tcmt_profile(CLIENTS, "server1"), handshakes, scheme, seed,
                    seconds(duration), seconds(warmup), "tcmt")


PRESETS = {"figure3": figure3_scenario, "tcmt": tcmt_scenario}


def with_overrides(s: Scenario, *, seed: Optional[int] = None, duration: Optional[float] = None,
                   warmup: Optional[float] = None, scheme: Optional[QosScheme] = None) -> Scenario:
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if duration is not None:
        changes["duration"] = seconds(duration)
    if warmup is not None:
        changes["warmup"] = seconds(warmup)
    if scheme is not None:
        changes["scheme"] = scheme
    out = replace(s, **changes)
    if not out.duration > out.warmup >= 0:
        raise ValidationError(["scenario: duration must exceed warmup"])
    return out

