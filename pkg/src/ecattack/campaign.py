"""Campaign orchestration: baseline, scanning, EC-DDoS, disconnecting DDoS and
the fake-AP takeover, plus threshold/survival measurements and energy
attribution."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .attacker import Attacker, FloodHandle, FloodSpec, PortSelector, device_ip, device_mac
from .devicemodel import (
    RATE_CAP,
    Device,
    DeviceProfile,
    EnergySample,
    PayloadClass,
    PortState,
)
from .fakeap import MAX_ATTEMPTS, CaptureLog, FakeAccessPoint
from .netsim import AccessPoint, Binding, Network, Packet, Protocol, SimulationError, Simulator

METER_PRIORITY = 10
EC_DDOS, F_AP = "EC-DDoS", "F-AP"
SEARCH_BOUNDS = {"raspberry_pi": (500, 20_000), "arduino": (100, 800)}


class PhaseError(SimulationError):
    pass


class CampaignError(SimulationError):
    def __init__(self, message: str, report: "CampaignReport"):
        super().__init__(message)
        self.report = report


# --- plan ------------------------------------------------------------------


@dataclass(frozen=True)
class FloodTemplate:
    """A flood without a target; ``rate=None`` picks the rate from the target's
    threshold (just under it for EC-DDoS, at it for DDoS)."""

    protocol: Protocol
    payload_class: PayloadClass = PayloadClass.NP
    port: PortSelector = PortState.OPEN
    rate: Optional[int] = None
    minutes: float = 30.0

    def __post_init__(self) -> None:
        if self.protocol is Protocol.ICMP_ECHO and self.port is not None:
            object.__setattr__(self, "port", None)

    def spec(self, target: str, rate: int, minutes: Optional[float] = None) -> FloodSpec:
        return FloodSpec(self.protocol, target, rate, self.payload_class, self.port,
                         max_duration=self.minutes if minutes is None else minutes)

    @property
    def label(self) -> str:
        port = self.port.value if isinstance(self.port, PortState) else self.port
        parts = [self.protocol.value.lower(), self.payload_class.value.lower()]
        if port is not None:
            parts.append(str(port))
        return "_".join(parts)


@dataclass(frozen=True)
class FapPlan:
    signal_margin: float = 10.0
    protocols: tuple[Protocol, ...] = (Protocol.TCP_SYN, Protocol.UDP, Protocol.ICMP_ECHO)
    rate: Optional[int] = None
    minutes: float = 19.0


DEFAULT_AP = AccessPoint("HealthNet", "a4:2b:b0:10:20:30", 6, "wpa2-psk", -50.0)


@dataclass(frozen=True)
class CampaignPlan:
    devices: Mapping[str, DeviceProfile]
    baseline_minutes: float = 30.0
    attack_matrix: tuple[FloodTemplate, ...] = (FloodTemplate(Protocol.TCP_SYN),)
    ddos: FloodTemplate = FloodTemplate(Protocol.TCP_SYN, minutes=10.0)
    fap: Optional[FapPlan] = FapPlan()
    ap: AccessPoint = DEFAULT_AP
    seed: int = 0
    measure_thresholds: bool = True

    def __post_init__(self) -> None:
        problems = []
        if not self.devices:
            problems.append("plan needs at least one device")
        if self.baseline_minutes < 30:
            problems.append("baseline_minutes must be >= 30")
        if not self.attack_matrix:
            problems.append("attack matrix must not be empty")
        if problems:
            raise ValueError("; ".join(problems))


# --- testbed ---------------------------------------------------------------


class Testbed:
    """One isolated simulator: legitimate AP, victims, attacker and a dormant
    fake AP, with every powered device metered once per second."""

    __test__ = False  # not a pytest class

    def __init__(self, profiles: Mapping[str, DeviceProfile], ap: AccessPoint = DEFAULT_AP,
                 seed: int = 0, signal_margin: float = 10.0, metered: bool = True) -> None:
        self.seed = seed
        self.sim = Simulator(keep_trace=metered)
        self.net = Network(self.sim)
        self.ap = self.net.add_ap(ap)
        self.devices: dict[str, Device] = {}
        for index, (dev_id, profile) in enumerate(profiles.items()):
            assoc = self.net.add_device(dev_id, sink=self._sink(dev_id))
            dev = Device(dev_id, profile, assoc, seed=seed, index=index)
            dev.bind_clock(lambda: self.sim.now)
            self.devices[dev_id] = dev
        self.attacker = Attacker(self.sim, self.net, self.devices)
        self.attacker.join(ap)
        self.fake = FakeAccessPoint(self.sim, self.net, self.attacker, ap, signal_margin, seed=seed)
        self.metered = metered
        if metered:
            self.sim.schedule(1, self._meter, "meter", METER_PRIORITY)

    def _sink(self, dev_id: str):
        def sink(p: Packet, count: int) -> None:
            self.devices[dev_id].receive(p, count, "fap" if p.src.startswith("fap:") else "flood")
        return sink

    def _meter(self) -> None:
        for dev in self.devices.values():
            if dev.powered:
                dev.sample_meter(self.sim.now)
        self.sim.schedule(self.sim.now + 1, self._meter, "meter", METER_PRIORITY)

    @property
    def now(self) -> int:
        return self.sim.now

    def associate_all(self) -> None:
        for dev_id in self.devices:
            if not self.net.state(dev_id).associated:
                self.net.associate(dev_id, self.ap)

    def run_for(self, seconds: int) -> None:
        self.sim.advance(self.sim.now + int(seconds))

    def send_telemetry(self, dev_id: str, n: int, protocol: Protocol = Protocol.UDP, port: int = 1883) -> None:
        ap = self.net.bound_ap(dev_id)
        dst = ap.node_id if ap is not None else self.ap.node_id
        self.net.deliver(Packet(dev_id, dst, protocol, port, 0, timestamp=self.sim.now), n)


# --- thresholds and survival ------------------------------------------------


def default_port(profile: DeviceProfile, protocol: Protocol) -> Optional[PortState]:
    """Open port if the device has one, otherwise an open|filtered one."""
    if protocol is Protocol.ICMP_ECHO:
        return None
    proto = "udp" if protocol is Protocol.UDP else "tcp"
    for state in (PortState.OPEN, PortState.OPEN_FILTERED):
        try:
            profile.port_table.lowest_port(proto, state)
            return state
        except ValueError:
            continue
    return None


def _trial(profile: DeviceProfile, protocol: Protocol, payload: PayloadClass, rate: int,
           max_duration: float) -> FloodHandle:
    bed = Testbed({"victim": profile}, metered=False)
    bed.associate_all()
    port = default_port(profile, protocol)
    spec = FloodSpec(protocol, "victim", rate, payload, port, max_duration=max_duration)
    handle = bed.attacker.launch_flood(spec)
    bed.sim.run_until(lambda: not handle.active or handle.disconnected_at is not None,
                      handle.started + spec.duration_s + 1)
    return handle


def disconnects(profile: DeviceProfile, protocol: Protocol, payload: PayloadClass, rate: int,
                max_duration: float = 8.0) -> bool:
    return _trial(profile, protocol, payload, rate, max_duration).disconnected_at is not None


def find_threshold_ar(profile: DeviceProfile, protocol: Protocol, payload: PayloadClass,
                      bounds: Optional[tuple[int, int]] = None, max_duration: float = 8.0,
                      method: str = "binary") -> Optional[int]:
    """Smallest integer sending rate that disconnects the device within
    ``max_duration`` minutes, or ``None`` when even the rate cap survives.

    ``method="linear"`` walks the bounds upward one PPS at a time; it exists
    to cross-check the binary search.
    """
    lo, hi = bounds or SEARCH_BOUNDS.get(profile.device_class, (1, RATE_CAP))

    def hit(rate: int) -> bool:
        return disconnects(profile, protocol, payload, rate, max_duration)

    if method == "linear":
        for rate in range(lo, hi + 1):
            if hit(rate):
                return rate
        return None
    if method != "binary":
        raise ValueError(f"unknown search method {method!r}")
    if not hit(hi):
        if hi >= RATE_CAP or not hit(RATE_CAP):
            return None
        lo, hi = hi + 1, RATE_CAP
    elif hit(lo):
        lo, hi = 1, lo
    while lo < hi:
        mid = (lo + hi) // 2
        if hit(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def measure_sd(profile: DeviceProfile, protocol: Protocol, payload: PayloadClass,
               rate: Optional[int] = None, max_duration: float = 10.0) -> Optional[float]:
    """Survival duration in minutes at ``rate`` (default: the threshold)."""
    if rate is None:
        rate = profile.threshold(payload)
        if rate is None:
            rate = RATE_CAP
    return _trial(profile, protocol, payload, rate, max_duration).survival_minutes


# --- attribution --------------------------------------------------------------

_SOURCE_LABEL = {"flood": EC_DDOS, "fap": F_AP}


def attribute_energy(samples: Iterable[EnergySample], baseline_mean: float) -> Optional[dict[str, float]]:
    """Share of above-baseline joules per attack source.

    Only samples taken while the device was associated and under attack
    count. Returns ``None`` when there is nothing above baseline.
    """
    totals = {EC_DDOS: 0.0, F_AP: 0.0}
    for s in samples:
        label = _SOURCE_LABEL.get(s.source)
        if label is None or not s.associated:
            continue
        totals[label] += max(0.0, s.joules - baseline_mean)
    return _fractions(totals)


def _fractions(totals: Mapping[str, float]) -> Optional[dict[str, float]]:
    total = sum(totals.values())
    if total <= 0:
        return None
    return {k: v / total for k, v in totals.items() if v > 0}


# --- report ----------------------------------------------------------------


@dataclass
class PhaseTrace:
    device: str
    phase: str
    start: int
    end: int
    samples: list[EnergySample]
    name: str = ""

    def rows(self) -> list[tuple[int, float, float, int]]:
        return [(s.t - self.start, s.joules, s.received_pps, int(s.associated)) for s in self.samples]


@dataclass
class BaselineStats:
    mean: float
    minimum: float
    maximum: float
    band: tuple[float, float]
    minutes: float
    start: int
    end: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "min": self.minimum, "max": self.maximum, "band": list(self.band),
                "minutes": self.minutes, "start": self.start, "end": self.end}


@dataclass
class AttackRecord:
    device: str
    kind: str
    template: FloodTemplate
    rate: int
    port: Optional[int]
    start: int
    end: int
    counters: dict[str, int]
    e1: float
    e2: float
    peak: float
    disconnect_t: Optional[int] = None
    sd_minutes: Optional[float] = None
    threshold_ar: Optional[int] = None
    trace: Optional[PhaseTrace] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "device": self.device, "kind": self.kind, "name": self.trace.name if self.trace else "",
            "protocol": self.template.protocol.value, "payload": self.template.payload_class.value,
            "port": self.port, "rate": self.rate, "start": self.start, "end": self.end,
            **self.counters, "e1": self.e1, "e2": self.e2, "peak": self.peak,
            "disconnect_t": self.disconnect_t, "sd_minutes": self.sd_minutes,
            "threshold_ar": self.threshold_ar,
        }


@dataclass
class FapRecord:
    device: str
    start: int
    end: int
    attempts: list[float]
    connected_at: Optional[int]
    connect_delay_minutes: Optional[float]
    failed: bool
    injection: Optional[dict] = None
    injection_mean: Optional[float] = None
    captured_packets: int = 0
    trace: Optional[PhaseTrace] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "device": self.device, "start": self.start, "end": self.end, "attempts": self.attempts,
            "connected_at": self.connected_at, "connect_delay_minutes": self.connect_delay_minutes,
            "failed": self.failed, "injection": self.injection, "injection_mean": self.injection_mean,
            "captured_packets": self.captured_packets,
        }


@dataclass
class CampaignReport:
    seed: int
    devices: dict[str, dict] = field(default_factory=dict)
    baseline: dict[str, BaselineStats] = field(default_factory=dict)
    scan: dict = field(default_factory=lambda: {"network": [], "ports": []})
    attacks: list[AttackRecord] = field(default_factory=list)
    fap: dict[str, FapRecord] = field(default_factory=dict)
    thresholds: dict[str, dict[str, Optional[int]]] = field(default_factory=dict)
    sd_grid: dict[str, dict[str, dict[str, Optional[float]]]] = field(default_factory=dict)
    attribution: dict[str, Optional[dict[str, float]]] = field(default_factory=dict)
    traces: list[PhaseTrace] = field(default_factory=list, repr=False)
    status: str = "ok"
    failure: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "seed": self.seed,
            "status": self.status,
            "failure": self.failure,
            "devices": self.devices,
            "baseline": {k: v.as_dict() for k, v in self.baseline.items()},
            "scan": self.scan,
            "attacks": [a.as_dict() for a in self.attacks],
            "fap": {k: v.as_dict() for k, v in self.fap.items()},
            "thresholds": self.thresholds,
            "sd_grid": self.sd_grid,
            "attribution": self.attribution,
        }


# --- the campaign -------------------------------------------------------------


def _mean(samples: Sequence[EnergySample]) -> float:
    return statistics.fmean(s.joules for s in samples) if samples else 0.0


class Campaign:
    """Runs the attack campaign on one testbed, enforcing phase order:
    baseline before any attack, and the fake AP only after a disconnect."""

    def __init__(self, plan: CampaignPlan) -> None:
        self.plan = plan
        margin = plan.fap.signal_margin if plan.fap else 10.0
        self.bed = Testbed(plan.devices, plan.ap, plan.seed, margin)
        self.bed.associate_all()
        self.report = CampaignReport(plan.seed)
        for dev in self.bed.devices.values():
            self.report.devices[dev.device_id] = {
                "profile": dev.profile.device_class, "ip": device_ip(dev.index), "mac": device_mac(dev.index)}
        self.disconnected_by_ddos: set[str] = set()

    def _device(self, dev_id: str) -> Device:
        try:
            return self.bed.devices[dev_id]
        except KeyError:
            raise PhaseError(f"unknown device {dev_id!r}") from None

    def _trace(self, dev_id: str, phase: str, start: int, end: int, name: str = "") -> PhaseTrace:
        tr = PhaseTrace(dev_id, phase, start, end, self._device(dev_id).samples_between(start, end),
                        name or f"{dev_id}_{phase}")
        self.report.traces.append(tr)
        return tr

    # phases
    def run_phase_baseline(self, minutes: Optional[float] = None) -> dict[str, BaselineStats]:
        minutes = self.plan.baseline_minutes if minutes is None else minutes
        if minutes < 30:
            raise PhaseError("baseline needs at least 30 minutes of samples")
        for dev_id in self.bed.devices:
            if not self.bed.net.state(dev_id).associated:
                raise PhaseError(f"{dev_id} is offline; baseline needs associated devices")
        start = self.bed.now
        self.bed.run_for(int(round(minutes * 60)))
        end = self.bed.now
        for dev_id, dev in self.bed.devices.items():
            tr = self._trace(dev_id, "baseline", start, end)
            j = [s.joules for s in tr.samples]
            self.report.baseline[dev_id] = BaselineStats(
                statistics.fmean(j), min(j), max(j), dev.profile.e_base, minutes, start, end)
        return self.report.baseline

    def run_phase_scan(self) -> dict:
        self._require_baseline()
        net = self.bed.attacker.scan_network()
        ports = []
        for host in net.hosts:
            if host.status != "online":
                continue
            for proto in ("tcp", "udp"):
                ports.append(self.bed.attacker.scan_ports(host.device_id, proto).as_dict())
        self.bed.run_for(1)  # scans cost one tick
        self.report.scan = {
            "timestamp": net.timestamp,
            "network": [vars(h) for h in net.hosts],
            "ports": ports,
        }
        return self.report.scan

    def _require_baseline(self) -> None:
        if not self.report.baseline:
            raise PhaseError("baseline phase must complete first")

    def run_phase_ecddos(self, dev_id: str, template: FloodTemplate) -> AttackRecord:
        self._require_baseline()
        dev = self._device(dev_id)
        if not self.bed.net.state(dev_id).associated:
            raise PhaseError(f"{dev_id} is not associated")
        thr = dev.profile.threshold(template.payload_class)
        rate = template.rate
        if rate is None:
            rate = thr - 1 if thr is not None else dev.profile.injection_rate()
        if thr is not None and rate >= thr:
            raise PhaseError(f"this is a DDoS spec, not EC-DDoS (rate {rate} >= threshold {thr})")
        spec = template.spec(dev_id, rate)
        start = self.bed.now
        handle = self.bed.attacker.launch_flood(spec)
        self.bed.run_for(spec.duration_s)
        self.bed.attacker.stop_flood(handle)
        end = self.bed.now
        n = sum(1 for a in self.report.attacks if a.device == dev_id and a.kind == "ecddos")
        tr = self._trace(dev_id, "ecddos", start, end, f"{dev_id}_ecddos_{n}_{template.label}")
        rec = AttackRecord(dev_id, "ecddos", template, rate, handle.port, start, end, handle.counters(),
                           self.report.baseline[dev_id].mean, _mean(tr.samples),
                           max(s.joules for s in tr.samples), handle.disconnected_at, handle.survival_minutes,
                           thr, tr)
        self.report.attacks.append(rec)
        return rec

    def run_phase_ddos_disconnect(self, dev_id: str, template: Optional[FloodTemplate] = None) -> AttackRecord:
        self._require_baseline()
        template = template or self.plan.ddos
        dev = self._device(dev_id)
        if not self.bed.net.state(dev_id).associated:
            raise PhaseError(f"{dev_id} is not associated")
        thr = dev.profile.threshold(template.payload_class)
        rate = template.rate
        if rate is None:
            rate = thr if thr is not None else RATE_CAP
        if thr is not None and rate < thr:
            raise PhaseError(f"rate {rate} is below the disconnect threshold {thr}; use EC-DDoS")
        spec = template.spec(dev_id, rate)
        start = self.bed.now
        handle = self.bed.attacker.launch_flood(spec)
        self.bed.sim.run_until(lambda: not handle.active or handle.disconnected_at is not None,
                               start + spec.duration_s)
        self.bed.attacker.stop_flood(handle)
        end = self.bed.now
        if handle.disconnected_at is not None:
            self.disconnected_by_ddos.add(dev_id)
        tr = self._trace(dev_id, "ddos", start, end)
        rec = AttackRecord(dev_id, "ddos", template, rate, handle.port, start, end, handle.counters(),
                           self.report.baseline[dev_id].mean, _mean(tr.samples),
                           max((s.joules for s in tr.samples), default=0.0), handle.disconnected_at,
                           handle.survival_minutes, thr, tr)
        self.report.attacks.append(rec)
        return rec

    def run_phase_fap(self, dev_id: str) -> FapRecord:
        fap = self.plan.fap or FapPlan()
        dev = self._device(dev_id)
        state = self.bed.net.state(dev_id)
        if dev_id not in self.disconnected_by_ddos:
            raise PhaseError(f"no disconnect event for {dev_id}; F-AP phase needs a prior DDoS disconnect")
        if state.bound_ap is Binding.LEGITIMATE:
            raise PhaseError(f"{dev_id} reconnected to the legitimate AP first")
        if state.bound_ap is Binding.FAKE:
            raise PhaseError(f"{dev_id} is already on the fake AP")
        fake = self.bed.fake
        start = self.bed.now
        attraction = fake.attract(dev)
        lo, hi = dev.profile.fap_connect_range
        limit = start + int(round(MAX_ATTEMPTS * hi * 60)) + 1
        self.bed.sim.run_until(lambda: attraction.connected_at is not None, limit)
        rec = FapRecord(dev_id, start, self.bed.now, attraction.attempts, attraction.connected_at,
                        attraction.delay_minutes, attraction.connected_at is None)
        if attraction.connected_at is not None:
            fake.monitor()
            fake.capture(dev_id)
            spec = None
            if fap.rate is not None:
                proto = fap.protocols[0]
                spec = FloodSpec(proto, dev_id, fap.rate, PayloadClass.NP,
                                 None if proto is Protocol.ICMP_ECHO else PortState.OPEN, max_duration=fap.minutes)
            handle = fake.inject_malicious(dev, spec, fap.protocols, fap.minutes)
            inj_start = self.bed.now
            self.bed.run_for(handle.spec.duration_s)
            self.bed.attacker.stop_flood(handle)
            inj = self._device(dev_id).samples_between(inj_start, self.bed.now)
            rec.injection = {"protocol": handle.spec.protocol.value, "rate": handle.spec.rate,
                             "start": inj_start, "end": self.bed.now, **handle.counters()}
            rec.injection_mean = _mean(inj)
            rec.captured_packets = len(fake.state.capture_log.slice(dev_id))
        rec.end = self.bed.now
        rec.trace = self._trace(dev_id, "fap", start, rec.end)
        self.report.fap[dev_id] = rec
        return rec

    def capture_log(self, dev_id: Optional[str] = None) -> CaptureLog:
        return self.bed.fake.state.capture_log.slice(dev_id)

    def measure_thresholds(self) -> None:
        proto = self.plan.ddos.protocol
        for dev_id, dev in self.bed.devices.items():
            self.report.thresholds[dev_id] = {
                p.value: find_threshold_ar(dev.profile, proto, p) for p in PayloadClass}
            self.report.sd_grid[dev_id] = {
                pr.value: {p.value: measure_sd(dev.profile, pr, p) for p in PayloadClass} for pr in Protocol}

    def attribute(self) -> dict[str, Optional[dict[str, float]]]:
        pooled = {EC_DDOS: 0.0, F_AP: 0.0}
        out: dict[str, Optional[dict[str, float]]] = {}
        attack_traces = [t for t in self.report.traces if t.phase in ("ecddos", "ddos", "fap")]
        for dev_id in self.bed.devices:
            base = self.report.baseline[dev_id].mean
            samples = [s for t in attack_traces if t.device == dev_id for s in t.samples]
            for s in samples:
                label = _SOURCE_LABEL.get(s.source)
                if label is not None and s.associated:
                    pooled[label] += max(0.0, s.joules - base)
            out[dev_id] = attribute_energy(samples, base)
        out["pooled"] = _fractions(pooled)
        self.report.attribution = out
        return out

    def run(self) -> CampaignReport:
        """Baseline, scan, then per device: EC-DDoS, DDoS disconnect and, when
        the attacks raised consumption, the fake-AP takeover."""
        phase, current = "baseline", None
        try:
            self.run_phase_baseline()
            phase = "scan"
            self.run_phase_scan()
            for dev_id in self.bed.devices:
                current = dev_id
                e1 = self.report.baseline[dev_id].mean
                phase = "ecddos"
                e2 = max(self.run_phase_ecddos(dev_id, t).e2 for t in self.plan.attack_matrix)
                phase = "ddos"
                ddos = self.run_phase_ddos_disconnect(dev_id)
                if self.plan.fap is not None and ddos.disconnect_t is not None and e1 < e2:
                    phase = "fap"
                    self.run_phase_fap(dev_id)
            current = None
            if self.plan.measure_thresholds:
                phase = "thresholds"
                self.measure_thresholds()
            phase = "attribution"
            self.attribute()
        except (SimulationError, ValueError) as exc:
            self.report.status = "failed"
            self.report.failure = {"phase": phase, "device": current, "error": str(exc)}
            raise CampaignError(f"{phase} phase failed: {exc}", self.report) from exc
        return self.report


def run_full_campaign(plan: CampaignPlan) -> CampaignReport:
    return Campaign(plan).run()
