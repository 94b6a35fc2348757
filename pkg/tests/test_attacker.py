import pytest
from hypothesis import given, settings, strategies as st

from ecattack.attacker import FloodSpec, FloodSpecError, HostDownError
from ecattack.campaign import Testbed
from ecattack.devicemodel import PayloadClass, PortState, arduino, raspberry_pi
from ecattack.netsim import Binding, Protocol, SimulationError

NP, HP = PayloadClass.NP, PayloadClass.HP


def test_scan_two_online_devices(bed):
    rep = bed.attacker.scan_network()
    assert [h.status for h in rep.hosts] == ["online", "online"]
    assert len({h.ip for h in rep.hosts}) == 2 and len({h.mac for h in rep.hosts}) == 2
    assert sorted(h.device_id for h in rep.hosts) == ["ard", "rpi"]


def test_scan_requires_joined_attacker(rpi):
    bed = Testbed({"rpi": rpi})
    bed.attacker.joined = None
    with pytest.raises(SimulationError, match="not on the network"):
        bed.attacker.scan_network()


def test_scan_through_takeover_matches_association_history(bed):
    statuses = [bed.attacker.scan_network()]
    spec = FloodSpec(Protocol.UDP, "ard", 800, NP, PortState.OPEN_FILTERED, max_duration=8)
    h = bed.attacker.launch_flood(spec)
    bed.run_for(spec.duration_s)
    assert h.disconnected_at is not None
    statuses.append(bed.attacker.scan_network())
    bed.fake.attract(bed.devices["ard"])
    bed.run_for(31 * 60)
    statuses.append(bed.attacker.scan_network())
    seen = [r.by_id()["ard"].status for r in statuses]
    assert seen == ["online", "offline", "online"]
    # oracle: the recorded history at each scan's timestamp
    hist = bed.net.state("ard")
    replay = ["offline" if hist.state_at(r.timestamp) is Binding.DISCONNECTED else "online" for r in statuses]
    assert replay == seen


def test_port_scan_examples(bed):
    c = bed.attacker.scan_ports("rpi", "tcp").counts
    assert (c[PortState.OPEN], c[PortState.OPEN_FILTERED], c[PortState.FILTERED], c[PortState.CLOSED]) == (3, 998, 65389, 0)
    u = bed.attacker.scan_ports("ard", "udp", (1, 1000))
    assert u.counts[PortState.OPEN_FILTERED] == 1000 and u.total == 1000
    empty = bed.attacker.scan_ports("rpi", "tcp", (10, 9))
    assert all(v == 0 for v in empty.counts.values())


def test_port_scan_offline_host_down(bed):
    bed.net.disconnect("rpi")
    with pytest.raises(HostDownError, match="host down"):
        bed.attacker.scan_ports("rpi", "tcp")


def test_icmp_flood_sent_count(bed):
    h = bed.attacker.launch_flood(FloodSpec(Protocol.ICMP_ECHO, "rpi", 500, max_duration=8))
    bed.run_for(600)
    assert h.sent == 500 * 480
    assert not h.active


def test_tcp_hp_200_disconnects_arduino(bed):
    h = bed.attacker.launch_flood(FloodSpec(Protocol.TCP_SYN, "ard", 200, HP, PortState.OPEN, max_duration=8))
    bed.run_for(480)
    assert h.disconnected_at is not None
    assert not bed.net.state("ard").associated


def test_udp_799_for_30_minutes_survives(bed):
    h = bed.attacker.launch_flood(FloodSpec(Protocol.UDP, "ard", 799, NP, PortState.OPEN_FILTERED, max_duration=30))
    bed.run_for(1800)
    assert h.disconnected_at is None
    assert bed.net.state("ard").associated
    assert h.sent == 799 * 1800


def test_stop_flood_is_idempotent(bed):
    h = bed.attacker.launch_flood(FloodSpec(Protocol.ICMP_ECHO, "rpi", 500, max_duration=8))
    bed.run_for(60)
    first = bed.attacker.stop_flood(h)
    bed.run_for(60)
    assert first == bed.attacker.stop_flood(h)
    assert h.sent == 30_000


def test_flood_spec_validation():
    with pytest.raises(FloodSpecError, match="rate exceeds cap"):
        FloodSpec(Protocol.UDP, "d", 200_000)
    with pytest.raises(FloodSpecError):
        FloodSpec(Protocol.ICMP_ECHO, "d", 10, dst_port=80)
    with pytest.raises(FloodSpecError):
        FloodSpec(Protocol.UDP, "d", 10, max_duration=5)
    with pytest.raises(FloodSpecError):
        FloodSpec(Protocol.UDP, "d", 10, max_duration=31)


def test_unknown_target(bed):
    with pytest.raises(SimulationError, match="unknown target"):
        bed.attacker.launch_flood(FloodSpec(Protocol.UDP, "ghost", 10))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 30_000), st.integers(1, 200), st.sampled_from(list(Protocol)))
def test_counter_ordering(rate, stop_after, proto):
    bed = Testbed({"rpi": raspberry_pi()}, metered=False)
    bed.associate_all()
    port = None if proto is Protocol.ICMP_ECHO else 22
    h = bed.attacker.launch_flood(FloodSpec(proto, "rpi", rate, NP, port, max_duration=8))
    bed.run_for(stop_after)
    bed.attacker.stop_flood(h)
    assert h.processed <= h.delivered <= h.sent
    assert h.sent == rate * min(stop_after, 480)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 799), st.sampled_from([8, 15, 30]), st.sampled_from(list(Protocol)))
def test_below_threshold_never_disconnects(rate, minutes, proto):
    bed = Testbed({"ard": arduino()}, metered=False)
    bed.associate_all()
    port = None if proto is Protocol.ICMP_ECHO else PortState.OPEN_FILTERED
    h = bed.attacker.launch_flood(FloodSpec(proto, "ard", rate, NP, port, max_duration=minutes))
    bed.run_for(minutes * 60)
    assert h.disconnected_at is None and bed.net.state("ard").associated
