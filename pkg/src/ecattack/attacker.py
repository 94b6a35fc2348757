"""Adversary node: network and port scans, and rate-controlled floods."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .devicemodel import (
    RATE_CAP,
    Device,
    PayloadClass,
    PortState,
    disconnect_check,
    reception_rate,
)
from .netsim import AccessPoint, Delivery, Network, Packet, Protocol, SimulationError, Simulator

MIN_DURATION, MAX_DURATION = 8.0, 30.0

PortSelector = Union[int, PortState, None]


class FloodSpecError(ValueError):
    pass


class HostDownError(SimulationError):
    pass


@dataclass(frozen=True)
class FloodSpec:
    protocol: Protocol
    target: str
    rate: int
    payload_class: PayloadClass = PayloadClass.NP
    dst_port: PortSelector = None
    tcp_flags: Optional[frozenset] = None
    max_duration: float = MAX_DURATION

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise FloodSpecError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.rate < 0:
            out.append("rate must be non-negative")
        if self.rate > RATE_CAP:
            out.append(f"rate exceeds cap ({self.rate} > {RATE_CAP} PPS)")
        if self.protocol is Protocol.ICMP_ECHO and self.dst_port is not None:
            out.append("ICMP floods take no port selector")
        if isinstance(self.dst_port, int) and not isinstance(self.dst_port, bool) and not 0 <= self.dst_port <= 65535:
            out.append(f"port {self.dst_port} out of range")
        if not MIN_DURATION <= self.max_duration <= MAX_DURATION:
            out.append(f"max_duration must be within [{MIN_DURATION:g}, {MAX_DURATION:g}] minutes")
        if self.tcp_flags is not None and self.protocol is not Protocol.TCP_SYN:
            out.append("tcp_flags only apply to TCP floods")
        return out

    @property
    def duration_s(self) -> int:
        return int(round(self.max_duration * 60))

    def with_rate(self, rate: int) -> "FloodSpec":
        return FloodSpec(self.protocol, self.target, rate, self.payload_class,
                         self.dst_port, self.tcp_flags, self.max_duration)


@dataclass
class FloodHandle:
    spec: FloodSpec
    src: str
    started: int
    port: Optional[int]
    sent: int = 0
    delivered: int = 0
    processed: int = 0
    active: bool = True
    stopped_at: Optional[int] = None
    disconnected_at: Optional[int] = None
    exposure_s: int = 0
    on_disconnect: list[Callable[["FloodHandle"], None]] = field(default_factory=list, repr=False)

    @property
    def active_seconds(self) -> int:
        return self.sent // self.spec.rate if self.spec.rate else 0

    @property
    def survival_minutes(self) -> Optional[float]:
        if self.disconnected_at is None:
            return None
        return (self.disconnected_at - self.started) / 60.0

    def counters(self) -> dict[str, int]:
        return {"sent": self.sent, "delivered": self.delivered, "processed": self.processed}


class Flood:
    """Drives one FloodHandle: one aggregated batch per simulated second."""

    def __init__(self, sim: Simulator, net: Network, device: Device, handle: FloodHandle,
                 keep_going: Optional[Callable[[], bool]] = None) -> None:
        self.sim, self.net, self.device, self.handle = sim, net, device, handle
        self.keep_going = keep_going
        spec = handle.spec
        flags = spec.tcp_flags if spec.tcp_flags is not None else (
            frozenset({"SYN"}) if spec.protocol is Protocol.TCP_SYN else None)
        self.packet = Packet(handle.src, spec.target, spec.protocol, handle.port,
                             spec.payload_class.nbytes, flags)
        self._next = None

    def start(self) -> None:
        self._next = self.sim.schedule(self.sim.now + 1, self._tick, f"flood:{self.handle.src}->{self.handle.spec.target}")

    def stop(self) -> None:
        h = self.handle
        if h.active:
            h.active = False
            h.stopped_at = self.sim.now
            if self._next is not None:
                self._next.cancel()

    def _tick(self) -> None:
        h, spec = self.handle, self.handle.spec
        if not h.active:
            return
        if self.keep_going is not None and not self.keep_going():
            self.stop()
            return
        count = spec.rate
        h.sent += count
        if count and self.net.deliver(self.packet, count) is Delivery.DELIVERED:
            h.delivered += count
            received = reception_rate(count, self.device.profile)
            h.processed += int(math.floor(received + 0.5))
            h.exposure_s += 1
            elapsed = min(h.exposure_s / 60.0, spec.max_duration)
            verdict = disconnect_check(received, spec, self.device.profile, elapsed)
            if verdict.disconnected_by(elapsed) and self.net.state(spec.target).associated:
                self.net.disconnect(spec.target)
                h.disconnected_at = self.sim.now
                for cb in h.on_disconnect:
                    cb(h)
        if self.sim.now - h.started >= spec.duration_s:
            self.stop()
        else:
            self._next = self.sim.schedule(self.sim.now + 1, self._tick, self._next.label)


@dataclass(frozen=True)
class HostStatus:
    device_id: str
    status: str
    ip: str
    mac: str


@dataclass(frozen=True)
class ScanReport:
    timestamp: int
    hosts: tuple[HostStatus, ...]

    def by_id(self) -> dict[str, HostStatus]:
        return {h.device_id: h for h in self.hosts}


@dataclass(frozen=True)
class PortScanReport:
    device_id: str
    protocol: str
    counts: dict[PortState, int]
    scanned_range: tuple[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict:
        return {
            "device": self.device_id,
            "protocol": self.protocol,
            "range": list(self.scanned_range),
            "counts": {s.value: n for s, n in self.counts.items()},
        }


def device_ip(index: int) -> str:
    return f"10.0.0.{index + 2}"


def device_mac(index: int) -> str:
    return "02:00:00:00:{:02x}:{:02x}".format((index + 1) >> 8 & 0xFF, (index + 1) & 0xFF)


class Attacker:
    node_id = "attacker"

    def __init__(self, sim: Simulator, net: Network, devices: dict[str, Device]) -> None:
        self.sim, self.net, self.devices = sim, net, devices
        self.joined: Optional[AccessPoint] = None
        self.floods: list[Flood] = []
        self.scans: list[ScanReport] = []
        net.add_node(self.node_id)

    def join(self, ap: AccessPoint) -> None:
        self.net.join(self.node_id, ap)
        self.joined = ap

    def scan_network(self) -> ScanReport:
        if self.joined is None:
            raise SimulationError("attacker is not on the network")
        hosts = []
        for dev in self.devices.values():
            online = self.net.state(dev.device_id).associated
            hosts.append(HostStatus(dev.device_id, "online" if online else "offline",
                                    device_ip(dev.index), device_mac(dev.index)))
        report = ScanReport(self.sim.now, tuple(hosts))
        self.scans.append(report)
        return report

    def _device(self, device_id: str) -> Device:
        try:
            return self.devices[device_id]
        except KeyError:
            raise SimulationError(f"unknown target {device_id!r}") from None

    def scan_ports(self, device_id: str, protocol: str = "tcp", port_range: tuple[int, int] = (0, 65535)) -> PortScanReport:
        dev = self._device(device_id)
        if not self.net.state(device_id).associated:
            raise HostDownError(f"host down: {device_id}")
        lo, hi = port_range
        return PortScanReport(device_id, protocol.lower(), dev.profile.port_table.counts(protocol, lo, hi), (lo, hi))

    def resolve_port(self, spec: FloodSpec) -> Optional[int]:
        if not isinstance(spec.dst_port, PortState):
            return spec.dst_port
        table = self._device(spec.target).profile.port_table
        proto = "udp" if spec.protocol is Protocol.UDP else "tcp"
        return table.lowest_port(proto, spec.dst_port)

    def launch_flood(self, spec: FloodSpec, src: Optional[str] = None,
                     keep_going: Optional[Callable[[], bool]] = None) -> FloodHandle:
        dev = self._device(spec.target)
        handle = FloodHandle(spec, src or self.node_id, self.sim.now, self.resolve_port(spec))
        flood = Flood(self.sim, self.net, dev, handle, keep_going)
        self.floods.append(flood)
        flood.start()
        return handle

    def stop_flood(self, handle: FloodHandle) -> dict[str, int]:
        for flood in self.floods:
            if flood.handle is handle:
                flood.stop()
                return handle.counters()
        raise SimulationError("unknown flood handle")
