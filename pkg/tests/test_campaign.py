import json

import pytest
from hypothesis import given, settings, strategies as st

from ecattack.campaign import (
    EC_DDOS,
    F_AP,
    Campaign,
    CampaignError,
    CampaignPlan,
    FapPlan,
    FloodTemplate,
    PhaseError,
    attribute_energy,
    disconnects,
    find_threshold_ar,
    run_full_campaign,
)
from ecattack.devicemodel import EnergySample, PayloadClass, PortState, arduino, raspberry_pi
from ecattack.netsim import Binding, Protocol
from ecattack.report import report_json

NP, HP = PayloadClass.NP, PayloadClass.HP
PROTOS = (Protocol.TCP_SYN, Protocol.UDP, Protocol.ICMP_ECHO)


def _plan(**kw):
    devices = kw.pop("devices", {"raspberry_pi": raspberry_pi(), "arduino": arduino()})
    kw.setdefault("measure_thresholds", False)
    return CampaignPlan(devices, **kw)


def _after_baseline(**kw):
    c = Campaign(_plan(**kw))
    c.run_phase_baseline()
    return c


# --- baseline ----------------------------------------------------------------


def test_baseline_means_in_band():
    base = _after_baseline().report.baseline
    assert 1.410 <= base["raspberry_pi"].mean <= 1.420
    assert 1.060 <= base["arduino"].mean <= 1.065


def test_short_baseline_rejected():
    with pytest.raises(ValueError, match="baseline_minutes"):
        _plan(baseline_minutes=0)
    with pytest.raises(PhaseError):
        Campaign(_plan()).run_phase_baseline(minutes=0)


def test_baseline_needs_associated_devices():
    c = Campaign(_plan())
    c.bed.net.disconnect("arduino")
    with pytest.raises(PhaseError, match="offline"):
        c.run_phase_baseline()


def test_attack_before_baseline_rejected():
    c = Campaign(_plan())
    with pytest.raises(PhaseError, match="baseline"):
        c.run_phase_ecddos("arduino", FloodTemplate(Protocol.ICMP_ECHO))


# --- EC-DDoS -------------------------------------------------------------------


def test_rpi_icmp_near_threshold():
    c = _after_baseline()
    rec = c.run_phase_ecddos("raspberry_pi", FloodTemplate(Protocol.ICMP_ECHO, minutes=8))
    assert rec.peak > 3.5 and rec.disconnect_t is None
    assert rec.e2 > rec.e1
    assert all(s.associated for s in rec.trace.samples)


def test_arduino_tcp_799_reaches_ceiling():
    c = _after_baseline()
    rec = c.run_phase_ecddos("arduino", FloodTemplate(Protocol.TCP_SYN, rate=799, minutes=8))
    assert 0.95 * 1.75 <= rec.peak < 1.75
    assert rec.disconnect_t is None


def test_ecddos_at_threshold_rejected():
    c = _after_baseline()
    with pytest.raises(PhaseError, match="this is a DDoS spec, not EC-DDoS"):
        c.run_phase_ecddos("arduino", FloodTemplate(Protocol.UDP, rate=800, port=PortState.OPEN_FILTERED))


# --- DDoS ------------------------------------------------------------------------


def test_arduino_udp_disconnect_time():
    c = _after_baseline()
    rec = c.run_phase_ddos_disconnect("arduino", FloodTemplate(Protocol.UDP, port=PortState.OPEN_FILTERED, minutes=10))
    assert rec.sd_minutes == pytest.approx(3.8, rel=0.05)
    assert not c.bed.net.state("arduino").associated


def test_rpi_tcp_disconnect_time():
    c = _after_baseline()
    rec = c.run_phase_ddos_disconnect("raspberry_pi", FloodTemplate(Protocol.TCP_SYN, minutes=10))
    assert rec.sd_minutes == pytest.approx(6.2, rel=0.05)


def test_rpi_hp_survives_even_at_cap():
    c = _after_baseline()
    rec = c.run_phase_ddos_disconnect("raspberry_pi", FloodTemplate(Protocol.TCP_SYN, HP, minutes=8))
    assert rec.disconnect_t is None and rec.rate == 100_000
    assert c.bed.net.state("raspberry_pi").associated


# --- thresholds ---------------------------------------------------------------


@pytest.mark.parametrize("payload,want", [(NP, 800), (HP, 200)])
def test_arduino_thresholds(payload, want):
    assert find_threshold_ar(arduino(), Protocol.TCP_SYN, payload) == want


def test_rpi_thresholds():
    assert find_threshold_ar(raspberry_pi(), Protocol.TCP_SYN, NP) == 20_000
    assert find_threshold_ar(raspberry_pi(), Protocol.TCP_SYN, HP) is None


@pytest.mark.parametrize("proto", PROTOS)
@pytest.mark.parametrize("profile,payload", [("rpi", NP), ("ard", NP), ("ard", HP)])
def test_search_result_is_sharp(proto, profile, payload):
    p = raspberry_pi() if profile == "rpi" else arduino()
    r = find_threshold_ar(p, proto, payload)
    assert disconnects(p, proto, payload, r) and not disconnects(p, proto, payload, r - 1)


@pytest.mark.slow
def test_binary_matches_linear_scan_rpi_window():
    # a full 500..20000 linear walk is too long; the window spans the threshold
    p = raspberry_pi()
    assert find_threshold_ar(p, Protocol.UDP, NP) == \
        find_threshold_ar(p, Protocol.UDP, NP, bounds=(19_900, 20_100), method="linear")


# --- fake AP phase -------------------------------------------------------------


def test_fap_before_disconnect_rejected():
    c = _after_baseline()
    with pytest.raises(PhaseError, match="disconnect"):
        c.run_phase_fap("raspberry_pi")


def test_fap_after_legit_reconnect_rejected():
    c = _after_baseline()
    c.run_phase_ddos_disconnect("arduino", FloodTemplate(Protocol.TCP_SYN, minutes=10))
    c.bed.associate_all()
    with pytest.raises(PhaseError, match="legitimate"):
        c.run_phase_fap("arduino")


def test_rpi_fap_flow():
    c = _after_baseline()
    c.run_phase_ddos_disconnect("raspberry_pi")
    rec = c.run_phase_fap("raspberry_pi")
    assert 3.0 <= rec.connect_delay_minutes <= 5.0
    assert rec.injection_mean > 4.00
    assert rec.captured_packets == rec.injection["delivered"]


def test_arduino_fap_flow_with_retries():
    for seed in range(20):
        c = _after_baseline(seed=seed)
        c.run_phase_ddos_disconnect("arduino")
        rec = c.run_phase_fap("arduino")
        assert 1 <= len(rec.attempts) <= 3
        if rec.failed:
            assert rec.injection is None
            continue
        assert rec.connect_delay_minutes <= 30
        assert rec.injection_mean > 2.00


# --- attribution ----------------------------------------------------------------


def _sample(t, j, source, associated=True):
    return EnergySample(t, 5.0, j / 5.0, j, j, 0.0, associated, source)


def test_attribution_examples():
    assert attribute_energy([_sample(1, 3.0, "flood")], 1.0) == {EC_DDOS: 1.0}
    half = attribute_energy([_sample(1, 11.0, "flood"), _sample(2, 11.0, "fap")], 1.0)
    assert half == {EC_DDOS: 0.5, F_AP: 0.5}
    assert attribute_energy([_sample(1, 1.0, "idle")], 1.0) is None
    # unassociated gaps do not count
    assert attribute_energy([_sample(1, 3.0, "fap", associated=False), _sample(2, 3.0, "flood")], 1.0)[EC_DDOS] == 1.0


def test_default_campaign_attribution(default_report):
    pooled = default_report.attribution["pooled"]
    assert pooled[EC_DDOS] == pytest.approx(0.55, abs=0.05)
    assert pooled[F_AP] == pytest.approx(0.45, abs=0.05)
    assert abs(pooled[EC_DDOS] + pooled[F_AP] - 1) <= 1e-9


def test_campaign_without_fap_is_all_ecddos():
    rep = run_full_campaign(_plan(fap=None))
    for split in rep.attribution.values():
        assert split == {EC_DDOS: 1.0}


def test_trace_continuity(default_report):
    for tr in default_report.traces:
        ts = [s.t for s in tr.samples]
        assert ts == list(range(tr.start + 1, tr.end + 1))


def test_e2_above_e1(default_report):
    for a in default_report.attacks:
        if a.kind == "ecddos":
            assert a.e2 > a.e1


def test_same_seed_same_report():
    a = report_json(run_full_campaign(_plan(seed=7)))
    b = report_json(run_full_campaign(_plan(seed=7)))
    assert a == b


def test_failure_keeps_partial_report():
    plan = _plan(attack_matrix=(FloodTemplate(Protocol.UDP, rate=900, port=PortState.OPEN_FILTERED),),
                 devices={"arduino": arduino()})
    with pytest.raises(CampaignError) as exc:
        run_full_campaign(plan)
    rep = exc.value.report
    assert rep.status == "failed" and rep.failure["phase"] == "ecddos"
    assert "arduino" in rep.baseline
    assert json.loads(report_json(rep))["failure"]["device"] == "arduino"


# --- phase gating under random orderings -----------------------------------------

PHASES = ["baseline", "scan", "ecddos", "ddos", "fap", "reassociate", "wait"]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(PHASES), min_size=1, max_size=7), st.integers(0, 1000))
def test_phase_gating(order, seed):
    c = Campaign(_plan(devices={"arduino": arduino()}, seed=seed,
                       ddos=FloodTemplate(Protocol.TCP_SYN, minutes=8),
                       fap=FapPlan(minutes=8)))
    dev = "arduino"
    done = set()
    for phase in order:
        try:
            if phase == "baseline":
                c.run_phase_baseline()
            elif phase == "scan":
                c.run_phase_scan()
            elif phase == "ecddos":
                c.run_phase_ecddos(dev, FloodTemplate(Protocol.ICMP_ECHO, minutes=8))
            elif phase == "ddos":
                c.run_phase_ddos_disconnect(dev)
            elif phase == "fap":
                c.run_phase_fap(dev)
            elif phase == "reassociate":
                c.bed.associate_all()
            else:
                c.bed.run_for(60)
        except PhaseError:
            if phase in ("scan", "ecddos", "ddos"):
                assert "baseline" not in done or not c.bed.net.state(dev).associated
            continue
        if phase in ("scan", "ecddos", "ddos"):
            assert "baseline" in done
        if phase == "fap":
            assert "ddos" in done
        done.add(phase)
    hist = c.bed.net.state(dev).history
    for prev, cur in zip(hist, hist[1:]):
        if cur.to_state is Binding.FAKE:
            assert prev.to_state is Binding.DISCONNECTED
