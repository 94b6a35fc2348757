import pytest
from hypothesis import given, settings, strategies as st

from ecattack.attacker import FloodSpec
from ecattack.netsim import (
    AccessPoint,
    AssociationError,
    Binding,
    Delivery,
    Network,
    Packet,
    PastEventError,
    Protocol,
    Simulator,
    UnknownNodeError,
)

LEGIT = AccessPoint("W", "aa:bb:cc:00:00:01", 6, "wpa2", -50.0)
FAKE = AccessPoint("W", "aa:bb:cc:00:00:01", 6, "wpa2", -40.0, is_fake=True)


def test_event_at_now_fires_before_clock_moves():
    sim = Simulator()
    fired = []
    sim.schedule(0, lambda: fired.append(sim.now))
    sim.advance(0)
    assert fired == [0]


def test_ties_fire_in_insertion_order():
    sim = Simulator()
    order = []
    sim.schedule(10, lambda: order.append("A"))
    sim.schedule(10, lambda: order.append("B"))
    sim.advance(10)
    assert order == ["A", "B"]


def test_past_event_rejected():
    sim = Simulator()
    sim.advance(5)
    with pytest.raises(PastEventError, match="past event"):
        sim.schedule(4)


def test_advance_empty_queue():
    sim = Simulator()
    assert sim.advance(100) == []
    assert sim.now == 100


def test_advance_partial():
    sim = Simulator()
    sim.schedule(5, label="five")
    sim.schedule(7, label="seven")
    assert [e.label for e in sim.advance(6)] == ["five"]
    assert sim.now == 6


def test_thirty_minutes_of_meter_ticks():
    sim = Simulator()

    def tick():
        if sim.now < 1800:
            sim.schedule(sim.now + 1, tick, "meter")

    sim.schedule(1, tick, "meter")
    assert len(sim.advance(1800)) == 1800


@given(st.lists(st.integers(0, 500), min_size=1, max_size=60))
def test_fired_timestamps_never_decrease(times):
    sim = Simulator()
    for t in times:
        sim.schedule(t)
    stamps = [e.time for e in sim.advance(max(times))]
    assert stamps == sorted(stamps)
    assert len(stamps) == len(times)


def _net():
    sim = Simulator()
    net = Network(sim)
    net.add_ap(LEGIT)
    net.add_device("d")
    net.add_node("attacker")
    net.join("attacker", LEGIT)
    return sim, net


def test_disconnected_device_takes_stronger_fake():
    sim, net = _net()
    net.add_ap(FAKE)
    assert net.strongest_visible() is FAKE
    st_ = net.associate("d", FAKE)
    assert st_.bound_ap is Binding.FAKE


def test_fake_while_legit_bound_is_refused():
    sim, net = _net()
    net.add_ap(FAKE)
    net.associate("d", LEGIT)
    with pytest.raises(AssociationError, match="still associated"):
        net.associate("d", FAKE)


def test_disconnected_device_joins_legit():
    sim, net = _net()
    assert net.associate("d", LEGIT).bound_ap is Binding.LEGITIMATE


def test_delivery_follows_association():
    sim, net = _net()
    p = Packet("attacker", "d", Protocol.UDP, 53)
    assert net.deliver(p) is Delivery.DROPPED
    net.associate("d", LEGIT)
    assert net.deliver(p) is Delivery.DELIVERED
    net.disconnect("d")
    assert net.deliver(p, 5) is Delivery.DROPPED
    assert net.dropped["d"] == 6
    with pytest.raises(UnknownNodeError):
        net.deliver(Packet("attacker", "nobody", Protocol.UDP, 53))


def test_one_second_of_15k_pps_is_processed_as_about_14544(bed):
    spec = FloodSpec(Protocol.TCP_SYN, "rpi", 15_000, dst_port=22, max_duration=8)
    h = bed.attacker.launch_flood(spec)
    bed.run_for(1)
    assert h.delivered == 15_000
    assert abs(h.processed - 14_544) <= 1


def test_packet_invariants():
    with pytest.raises(ValueError):
        Packet("a", "b", Protocol.ICMP_ECHO, 80)
    with pytest.raises(ValueError):
        Packet("a", "b", Protocol.UDP, 53, payload_bytes=100)
    with pytest.raises(ValueError):
        Packet("a", "b", Protocol.UDP, 53, tcp_flags=frozenset({"SYN"}))


ops = st.lists(st.tuples(st.sampled_from(["legit", "fake", "drop", "wait"]), st.integers(1, 5)), max_size=40)


@settings(max_examples=60)
@given(ops)
def test_association_exclusive_and_history_complete(sequence):
    sim, net = _net()
    net.add_ap(FAKE)
    observed = [net.state("d").bound_ap]
    for op, gap in sequence:
        try:
            if op == "legit":
                net.associate("d", LEGIT)
            elif op == "fake":
                net.associate("d", FAKE)
            elif op == "drop":
                net.disconnect("d")
        except AssociationError:
            # rebinding requires a disconnect first
            assert net.state("d").associated
        for _ in range(gap):
            sim.advance(sim.now + 1)
            observed.append(net.state("d").bound_ap)
    st_ = net.state("d")
    changes = sum(1 for a, b in zip(observed, observed[1:]) if a is not b)
    assert len(st_.history) == changes
    # never straight from legitimate to fake
    assert not any(t.from_state is Binding.LEGITIMATE and t.to_state is Binding.FAKE for t in st_.history)
    for t in range(sim.now + 1):
        assert st_.state_at(t) in Binding
