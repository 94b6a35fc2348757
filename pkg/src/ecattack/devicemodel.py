"""Victim device behaviour: port tables, packet reception, disconnection and
per-second energy draw.

All rates are packets per second (PPS); energies are joules per one-second
window, so J/s and W are interchangeable here.
"""

from __future__ import annotations

import enum
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Optional

from scipy.optimize import brentq

from .netsim import AssociationState, Binding, Packet, Protocol, SimulationError

RATE_CAP = 100_000
# sent rate, as a fraction of the NP threshold, at which a flood reaches 95% of
# its energy ceiling
ENERGY_ANCHOR_FRACTION = 0.75
ENERGY_ANCHOR_LEVEL = 0.95
UDP_JITTER = 0.05
CLOSED_PORT_ATTENUATION = 0.5


class PortState(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    FILTERED = "filtered"
    OPEN_FILTERED = "open_filtered"


class PayloadClass(str, enum.Enum):
    NP = "NP"
    HP = "HP"

    @property
    def nbytes(self) -> int:
        return 0 if self is PayloadClass.NP else 1500

    @classmethod
    def parse(cls, text: str) -> "PayloadClass":
        key = text.strip().upper()
        return cls({"PH": "HP"}.get(key, key))


class PortClass(str, enum.Enum):
    """Energy-relevant grouping of port states."""

    OPEN = "open"
    CLOSED = "closed"

    @classmethod
    def of(cls, state: Optional[PortState]) -> "PortClass":
        if state in (PortState.CLOSED, PortState.FILTERED):
            return cls.CLOSED
        return cls.OPEN


class ProfileError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class DeviceStateError(SimulationError):
    pass


# --- port tables --------------------------------------------------------------

# A TCP scan combines a full-range SYN pass (open/closed/filtered) with a
# FIN pass over the common ports (open_filtered). UDP is a single pass.
PROBE_PASSES = {"tcp": ("tcp_syn", "tcp_fin"), "udp": ("udp",)}


@dataclass(frozen=True)
class PortTable:
    passes: Mapping[str, Mapping[int, PortState]]

    def _maps(self, protocol: str):
        try:
            names = PROBE_PASSES[protocol.lower()]
        except KeyError:
            raise ValueError(f"port scans cover tcp and udp, not {protocol!r}") from None
        return [self.passes.get(name, {}) for name in names]

    def counts(self, protocol: str, lo: int = 0, hi: int = 65535) -> dict[PortState, int]:
        tally: Counter = Counter()
        for ports in self._maps(protocol):
            tally.update(s for p, s in ports.items() if lo <= p <= hi)
        return {s: tally.get(s, 0) for s in PortState}

    def summary(self) -> dict[str, dict[PortState, int]]:
        return {proto: self.counts(proto) for proto in PROBE_PASSES}

    def state_of(self, protocol: str, port: int) -> Optional[PortState]:
        for ports in self._maps(protocol):
            if port in ports:
                return ports[port]
        return None

    def lowest_port(self, protocol: str, state: PortState) -> int:
        candidates = [p for ports in self._maps(protocol) for p, s in ports.items() if s is state]
        if not candidates:
            raise ValueError(f"no {protocol} port in state {state.value}")
        return min(candidates)


def _table(syn_range: int, syn_open: Iterable[int], fin_ports: Iterable[int],
           udp_ports: Iterable[int], udp_open: Iterable[int]) -> PortTable:
    syn_open, udp_open = set(syn_open), set(udp_open)
    syn = {p: PortState.OPEN if p in syn_open else PortState.FILTERED for p in range(1, syn_range + 1)}
    fin = {p: PortState.OPEN_FILTERED for p in fin_ports}
    udp = {p: PortState.OPEN if p in udp_open else PortState.OPEN_FILTERED for p in udp_ports}
    return PortTable({"tcp_syn": syn, "tcp_fin": fin, "udp": udp})


@lru_cache(maxsize=None)
def raspberry_pi_ports() -> PortTable:
    return _table(
        syn_range=65392,
        syn_open=(22, 80, 1883),
        fin_ports=[p for p in range(1, 1001) if p not in (22, 80)],
        udp_ports=range(1, 705),
        udp_open=(53, 67, 123, 500),
    )


@lru_cache(maxsize=None)
def arduino_ports() -> PortTable:
    return _table(
        syn_range=23,
        syn_open=(23,),
        fin_ports=range(1, 1001),
        udp_ports=range(1, 1001),
        udp_open=(),
    )


# --- reception ---------------------------------------------------------------


def calibrate_gamma(r_lin: float, sent: float, received: float) -> float:
    """Scale of the logarithmic region so that ``sent`` maps to ``received``."""
    excess, gained = sent - r_lin, received - r_lin
    if not 0 < gained < excess:
        raise ValueError("calibration point must lie strictly inside the saturating region")
    return brentq(lambda g: g * math.log1p(excess / g) - gained, 1e-6 * excess, 1e9 * excess, xtol=1e-9)


RPI_GAMMA = calibrate_gamma(10_000, 15_000, 14_544)


# --- profiles ----------------------------------------------------------------

EnergyKey = tuple[Protocol, PayloadClass, PortClass]


def _ceilings(open_ceilings: Mapping[Protocol, float], e_base: tuple[float, float]) -> dict[EnergyKey, float]:
    mid = (e_base[0] + e_base[1]) / 2
    out = {}
    for proto, ceiling in open_ceilings.items():
        for payload in PayloadClass:
            out[(proto, payload, PortClass.OPEN)] = ceiling
            out[(proto, payload, PortClass.CLOSED)] = mid + CLOSED_PORT_ATTENUATION * (ceiling - mid)
    return out


@dataclass(frozen=True)
class DeviceProfile:
    device_class: str
    port_table: PortTable = field(repr=False)
    e_base: tuple[float, float]
    e_max: Mapping[EnergyKey, float] = field(repr=False)
    ar_threshold: Mapping[PayloadClass, Optional[int]]
    sd_ref: Mapping[tuple[Protocol, PayloadClass], Optional[float]]
    r_lin: float
    gamma: float
    fap_connect_range: tuple[float, float]
    fap_e_level: float
    fap_e_max: float
    fap_attempt_success: float = 1.0
    voltage: float = 5.0

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ProfileError(problems)

    def problems(self) -> list[str]:
        out = []
        lo, hi = self.e_base
        if not 0 <= lo <= hi:
            out.append(f"e_base band must satisfy 0 <= lo <= hi, got {self.e_base}")
        for key, ceiling in self.e_max.items():
            if ceiling < hi:
                out.append(f"e_max{tuple(k.value for k in key)}={ceiling} below baseline {hi}")
        np_thr = self.ar_threshold.get(PayloadClass.NP)
        hp_thr = self.ar_threshold.get(PayloadClass.HP)
        if np_thr is not None and hp_thr is not None and hp_thr > np_thr:
            out.append("HP threshold must not exceed NP threshold")
        for payload, thr in self.ar_threshold.items():
            if thr is not None and not 0 < thr <= RATE_CAP:
                out.append(f"{payload.value} threshold {thr} outside (0, {RATE_CAP}]")
        for key, sd in self.sd_ref.items():
            if sd is not None and sd <= 0:
                out.append(f"sd_ref{tuple(k.value for k in key)} must be positive")
        if self.r_lin < 0 or self.gamma <= 0:
            out.append("reception needs r_lin >= 0 and gamma > 0")
        a, b = self.fap_connect_range
        if not 0 < a <= b:
            out.append(f"fap_connect_range must satisfy 0 < min <= max, got {self.fap_connect_range}")
        if self.fap_e_max <= self.fap_e_level or self.fap_e_level < hi:
            out.append("need e_base.hi <= fap_e_level < fap_e_max")
        if not 0 < self.fap_attempt_success <= 1:
            out.append("fap_attempt_success must lie in (0, 1]")
        if self.voltage <= 0:
            out.append("voltage must be positive")
        return out

    @property
    def e_base_mid(self) -> float:
        return (self.e_base[0] + self.e_base[1]) / 2

    def threshold(self, payload: PayloadClass) -> Optional[int]:
        return self.ar_threshold.get(payload)

    def received_threshold(self, payload: PayloadClass) -> Optional[float]:
        thr = self.threshold(payload)
        return None if thr is None else reception_rate(thr, self)

    def ceiling(self, protocol: Protocol, payload: PayloadClass, port_class: PortClass = PortClass.OPEN) -> float:
        if protocol is Protocol.ICMP_ECHO:
            port_class = PortClass.OPEN
        return self.e_max[(protocol, payload, port_class)]

    def anchor_received(self) -> float:
        thr = self.threshold(PayloadClass.NP)
        sent = RATE_CAP if thr is None else ENERGY_ANCHOR_FRACTION * thr
        return reception_rate(sent, self)

    def kappa(self, protocol: Protocol, payload: PayloadClass) -> float:
        return _kappa(self.anchor_received(), self.e_base_mid, self.ceiling(protocol, payload))

    def fap_kappa(self) -> float:
        return _kappa(self.anchor_received(), self.e_base_mid, self.fap_e_max)

    def injection_rate(self) -> int:
        """Highest sent rate that keeps the device associated."""
        thr = self.threshold(PayloadClass.NP)
        return RATE_CAP if thr is None else thr - 1


def _kappa(anchor: float, mid: float, ceiling: float) -> float:
    frac = (ENERGY_ANCHOR_LEVEL * ceiling - mid) / (ceiling - mid)
    if frac <= 0:
        # ceiling so close to baseline that any attack already sits above 95%
        return anchor
    return -anchor / math.log1p(-frac)


def raspberry_pi() -> DeviceProfile:
    e_base = (1.410, 1.420)
    return DeviceProfile(
        device_class="raspberry_pi",
        port_table=raspberry_pi_ports(),
        e_base=e_base,
        e_max=_ceilings({Protocol.TCP_SYN: 3.3, Protocol.ICMP_ECHO: 3.6, Protocol.UDP: 3.5}, e_base),
        ar_threshold={PayloadClass.NP: 20_000, PayloadClass.HP: None},
        sd_ref={
            (Protocol.ICMP_ECHO, PayloadClass.NP): 7.58,
            (Protocol.TCP_SYN, PayloadClass.NP): 6.2,
            (Protocol.UDP, PayloadClass.NP): 7.8,
            (Protocol.ICMP_ECHO, PayloadClass.HP): None,
            (Protocol.TCP_SYN, PayloadClass.HP): None,
            (Protocol.UDP, PayloadClass.HP): None,
        },
        r_lin=10_000,
        gamma=RPI_GAMMA,
        fap_connect_range=(3.0, 5.0),
        fap_e_level=4.00,
        fap_e_max=4.30,
        fap_attempt_success=1.0,
    )


def arduino() -> DeviceProfile:
    e_base = (1.060, 1.065)
    return DeviceProfile(
        device_class="arduino",
        port_table=arduino_ports(),
        e_base=e_base,
        e_max=_ceilings({Protocol.TCP_SYN: 1.75, Protocol.ICMP_ECHO: 1.25, Protocol.UDP: 1.50}, e_base),
        ar_threshold={PayloadClass.NP: 800, PayloadClass.HP: 200},
        sd_ref={
            (Protocol.ICMP_ECHO, PayloadClass.NP): 3.6,
            (Protocol.TCP_SYN, PayloadClass.NP): 3.3,
            (Protocol.UDP, PayloadClass.NP): 3.8,
            (Protocol.ICMP_ECHO, PayloadClass.HP): 3.13,
            (Protocol.TCP_SYN, PayloadClass.HP): 2.44,
            (Protocol.UDP, PayloadClass.HP): 2.44,
        },
        r_lin=500,
        # same curvature as the Pi, scaled to the Arduino's linear limit
        gamma=RPI_GAMMA * 500 / 10_000,
        fap_connect_range=(7.0, 10.0),
        fap_e_level=2.00,
        fap_e_max=2.15,
        fap_attempt_success=0.6,
    )


BUILTIN_PROFILES = {"raspberry_pi": raspberry_pi, "arduino": arduino}


def builtin_profile(name: str) -> DeviceProfile:
    try:
        return BUILTIN_PROFILES[name]()
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; built-ins: {sorted(BUILTIN_PROFILES)}") from None


# --- behaviour ---------------------------------------------------------------


def reception_rate(sent: float, profile: DeviceProfile) -> float:
    """Packets per second the device actually processes when sent ``sent``.

    Linear up to ``r_lin``, logarithmic beyond it.
    """
    if sent < 0:
        raise ValueError("sent rate must be non-negative")
    if sent <= profile.r_lin:
        return float(sent)
    g = profile.gamma
    return profile.r_lin + g * math.log1p((sent - profile.r_lin) / g)


@dataclass(frozen=True)
class DisconnectVerdict:
    sd_minutes: Optional[float]

    @property
    def survives(self) -> bool:
        return self.sd_minutes is None

    def disconnected_by(self, elapsed_minutes: float) -> bool:
        return self.sd_minutes is not None and elapsed_minutes >= self.sd_minutes


SURVIVES = DisconnectVerdict(None)


def disconnect_check(received: float, spec, profile: DeviceProfile, elapsed: float = 0.0) -> DisconnectVerdict:
    """Survival duration of the device under a sustained flood.

    The threshold is compared in received space: a flood disconnects when the
    device processes at least what it would at the threshold sending rate.
    Above it, the survival time shrinks in inverse proportion to the rate.
    ``elapsed`` (minutes of exposure so far) must not exceed the flood's
    maximum duration.
    """
    max_duration = float(spec.max_duration)
    if elapsed > max_duration:
        raise ValueError(f"elapsed {elapsed} min exceeds max duration {max_duration} min")
    sd_ref = profile.sd_ref.get((spec.protocol, spec.payload_class))
    thr = profile.received_threshold(spec.payload_class)
    if sd_ref is None or thr is None or received < thr:
        return SURVIVES
    sd = sd_ref * thr / received
    return DisconnectVerdict(min(sd, max_duration))


def port_class_for(spec, profile: DeviceProfile) -> PortClass:
    if spec.protocol is Protocol.ICMP_ECHO or spec.dst_port is None:
        return PortClass.OPEN
    if isinstance(spec.dst_port, PortState):
        return PortClass.of(spec.dst_port)
    proto = "udp" if spec.protocol is Protocol.UDP else "tcp"
    return PortClass.of(profile.port_table.state_of(proto, spec.dst_port))


def energy_rate(received: float, spec, profile: DeviceProfile, rng: Optional[random.Random] = None) -> float:
    """Joules per second drawn while processing ``received`` PPS of ``spec``.

    Without a flood (``spec is None``) the draw is a seeded value inside the
    baseline band. With one, it saturates from the band midpoint toward the
    ceiling for the flood's protocol, payload and port class.
    """
    if received < 0:
        raise ValueError("received rate must be non-negative")
    if spec is None:
        rng = rng or random.Random(0)
        return rng.uniform(*profile.e_base)
    mid = profile.e_base_mid
    ceiling = profile.ceiling(spec.protocol, spec.payload_class, port_class_for(spec, profile))
    kappa = profile.kappa(spec.protocol, spec.payload_class)
    return mid + (ceiling - mid) * -math.expm1(-received / kappa)


def energy_rate_fap(profile: DeviceProfile, association: AssociationState, received: Optional[float] = None) -> float:
    """Energy draw under malicious injection from the fake AP.

    ``received`` defaults to the steady state of an injection running just
    under the disconnect threshold.
    """
    if association.bound_ap is not Binding.FAKE:
        raise DeviceStateError(f"{association.device_id} is not associated to a fake AP")
    if received is None:
        received = reception_rate(profile.injection_rate(), profile)
    mid = profile.e_base_mid
    return mid + (profile.fap_e_max - mid) * -math.expm1(-received / profile.fap_kappa())


def udp_jitter(energy: float, profile: DeviceProfile, ceiling: float, rng: random.Random) -> float:
    """Seeded fluctuation of +/-5% of the above-baseline part, kept below the ceiling."""
    swing = UDP_JITTER * (energy - profile.e_base_mid) * rng.uniform(-1.0, 1.0)
    out = energy + swing
    if out >= ceiling:
        out = energy - abs(swing)
    return out


# --- the powered device and its meter -------------------------------------


@dataclass(frozen=True)
class EnergySample:
    t: int
    voltage: float
    current: float
    watts: float
    joules: float
    received_pps: float = 0.0
    associated: bool = True
    source: str = "idle"

    def __post_init__(self) -> None:
        if min(self.voltage, self.current, self.watts, self.joules) < 0:
            raise ValueError("energy sample fields must be non-negative")


@dataclass(frozen=True)
class Stimulus:
    """What a batch of received packets looks like to the energy model."""

    protocol: Protocol
    payload_class: PayloadClass
    dst_port: Optional[object]
    source: str

    @classmethod
    def from_packet(cls, p: Packet, source: str) -> "Stimulus":
        payload = PayloadClass.HP if p.payload_bytes else PayloadClass.NP
        return cls(p.protocol, payload, p.dst_port, source)


class Device:
    """A powered victim node: buffers per-second receptions and meters energy."""

    def __init__(self, device_id: str, profile: DeviceProfile, association: AssociationState,
                 seed: int = 0, index: int = 0) -> None:
        self.device_id = device_id
        self.profile = profile
        self.association = association
        self.index = index
        self.powered = True
        self.trace: list[EnergySample] = []
        self._rx: dict[int, Counter] = {}
        self._rng = random.Random(f"{seed}/{device_id}/meter")
        self._clock = lambda: 0

    def bind_clock(self, clock) -> None:
        self._clock = clock

    def receive(self, packet: Packet, count: int, source: str = "flood") -> None:
        t = self._clock()
        self._rx.setdefault(t, Counter())[Stimulus.from_packet(packet, source)] += count

    def received_at(self, t: int) -> int:
        return sum(self._rx.get(t, Counter()).values())

    def sample_meter(self, t: int) -> EnergySample:
        if not self.powered:
            raise DeviceStateError(f"{self.device_id} is powered off")
        batch = self._rx.pop(t, Counter())
        delivered = sum(batch.values())
        received = reception_rate(delivered, self.profile)
        assoc = self.association
        state = assoc.bound_ap
        if state is Binding.FAKE and any(s.source == "fap" for s in batch):
            watts = energy_rate_fap(self.profile, assoc, received)
            source = "fap"
        elif delivered:
            stim = max(batch.items(), key=lambda kv: (kv[1], kv[0].protocol.value))[0]
            watts = energy_rate(received, stim, self.profile)
            if stim.protocol is Protocol.UDP:
                ceiling = self.profile.ceiling(stim.protocol, stim.payload_class, port_class_for(stim, self.profile))
                watts = udp_jitter(watts, self.profile, ceiling, self._rng)
            source = "fap" if state is Binding.FAKE else "flood"
        else:
            watts = energy_rate(0.0, None, self.profile, self._rng)
            source = "fap" if state is Binding.FAKE else "idle"
        v = self.profile.voltage
        sample = EnergySample(t, v, watts / v, watts, watts * 1.0, received, assoc.associated, source)
        self.trace.append(sample)
        return sample

    def samples_between(self, start: int, end: int) -> list[EnergySample]:
        """Samples with start < t <= end."""
        return [s for s in self.trace if start < s.t <= end]
