import ipaddress
import sys

import pytest

from railqos.model import Packet, TosClass, TransportProtocol


def ip(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


def make_packet(**kw) -> Packet:
    fields = dict(
        id=0, app="voice", src_node="a", dst_node="b", src_ip=ip("10.0.0.1"), dst_ip=ip("10.0.1.1"),
        src_port=5004, dst_port=5004, protocol=TransportProtocol.UDP, tos=TosClass.EF,
        size_bytes=200, created_at=0,
    )
    fields.update(kw)
    return Packet(**fields)


@pytest.fixture
def packet():
    return make_packet


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def two_node_scenario(profiles=(), *, bandwidth_bps=2_048_000, propagation_s=1e-3, impairment=None,
                      duration_s=10.0, warmup_s=0.0, queue=100, seed=1, scheme=None, tcmt=None, handshakes=()):
    """A client and a server joined by one link."""
    from railqos.classification import QosScheme
    from railqos.model import seconds
    from railqos.network import Capability, LinkSpec, NodeKind, NodeSpec
    from railqos.scenario import Scenario

    nodes = (NodeSpec("a", NodeKind.CLIENT, Capability.L2, ip("10.0.0.1")),
             NodeSpec("b", NodeKind.SERVER, Capability.L2, ip("10.0.1.1")))
    links = (LinkSpec("ab", "a", "b", bandwidth_bps, seconds(propagation_s), queue, impairment),)
    return Scenario(nodes, links, tuple(profiles), tcmt, tuple(handshakes), scheme or QosScheme.NON_QOS, seed,
                    seconds(duration_s), seconds(warmup_s), "two-node")


def single_message_profile(size=1500, at_s=1.0, name="probe", **kw):
    """One message of `size` bytes from a to b at `at_s`."""
    from railqos.engine import Constant
    from railqos.traffic import ApplicationProfile

    fields = dict(name=name, protocol=TransportProtocol.UDP, dst_port=7000, tos=TosClass.BE,
                  message_size=Constant(size), inter_arrival=Constant(1e6), sources=("a",), destination="b",
                  start=Constant(at_s))
    fields.update(kw)
    return ApplicationProfile(**fields)
