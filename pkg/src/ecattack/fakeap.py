"""Evil-twin access point: cloning, luring disconnected devices, traffic
capture and energy-draining injection."""

from __future__ import annotations

import csv
import enum
import io
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .attacker import Attacker, FloodHandle, FloodSpec
from .devicemodel import Device, PayloadClass
from .netsim import AccessPoint, AssociationError, Binding, Network, Packet, Protocol, SimulationError, Simulator

MAX_ATTEMPTS = 3
CAPTURE_HEADER = ("t", "direction", "protocol", "bytes")


class FakeApError(SimulationError):
    pass


class Mode(enum.Enum):
    DORMANT = "dormant"
    BROADCASTING = "broadcasting"
    MONITORING = "monitoring"


def clone_ap(legit: AccessPoint, signal_margin: float) -> AccessPoint:
    if legit.is_fake:
        raise FakeApError("cannot clone a fake AP")
    if not signal_margin > 0:
        raise FakeApError("margin must be positive")
    return AccessPoint(legit.ssid, legit.bssid, legit.channel, legit.security_profile,
                       legit.signal_strength + signal_margin, is_fake=True)


@dataclass(frozen=True)
class CaptureEntry:
    """Run of ``count`` identical packet summaries in one tick."""

    t: int
    device_id: str
    direction: str
    protocol: str
    bytes: int
    count: int = 1


class CaptureLog:
    """Append-only capture log; length and iteration are per packet."""

    def __init__(self, entries: Sequence[CaptureEntry] = ()) -> None:
        self.entries: list[CaptureEntry] = list(entries)

    def append(self, entry: CaptureEntry) -> None:
        if self.entries and entry.t < self.entries[-1].t:
            raise FakeApError("capture log timestamps must not decrease")
        self.entries.append(entry)

    def __len__(self) -> int:
        return sum(e.count for e in self.entries)

    def __iter__(self) -> Iterator[tuple[int, str, str, int]]:
        for e in self.entries:
            row = (e.t, e.direction, e.protocol, e.bytes)
            for _ in range(e.count):
                yield row

    def slice(self, device_id: Optional[str] = None, start: int = 0, end: Optional[int] = None) -> "CaptureLog":
        return CaptureLog([
            e for e in self.entries
            if (device_id is None or e.device_id == device_id) and e.t >= start and (end is None or e.t <= end)
        ])

    def count(self, direction: Optional[str] = None) -> int:
        return sum(e.count for e in self.entries if direction is None or e.direction == direction)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CAPTURE_HEADER)
        w.writerows(self)
        return buf.getvalue()


@dataclass
class FakeApState:
    clone_of: str
    mode: Mode = Mode.DORMANT
    connected_devices: set[str] = field(default_factory=set)
    capture_log: CaptureLog = field(default_factory=CaptureLog)
    injection_active: dict[str, FloodSpec] = field(default_factory=dict)


@dataclass
class AttractResult:
    device_id: str
    started: int
    attempts: list[float] = field(default_factory=list)
    connected_at: Optional[int] = None
    failed: bool = False

    @property
    def delay_minutes(self) -> Optional[float]:
        if self.connected_at is None:
            return None
        return (self.connected_at - self.started) / 60.0


class FakeAccessPoint:
    def __init__(self, sim: Simulator, net: Network, attacker: Attacker, legit: AccessPoint,
                 signal_margin: float, seed: int = 0) -> None:
        self.sim, self.net, self.attacker = sim, net, attacker
        self.ap = clone_ap(legit, signal_margin)
        self.state = FakeApState(clone_of=legit.bssid)
        self._rng = random.Random(f"{seed}/fap")
        self.handles: dict[str, FloodHandle] = {}
        self.attractions: dict[str, AttractResult] = {}
        self._capture_from: dict[str, int] = {}
        net.observe(self._observe)

    @property
    def node_id(self) -> str:
        return self.ap.node_id

    def broadcast(self) -> None:
        if self.state.mode is Mode.DORMANT:
            self.net.add_ap(self.ap)
            self.attacker.join(self.ap)
            self.state.mode = Mode.BROADCASTING

    def monitor(self) -> None:
        if self.state.mode is Mode.DORMANT:
            raise FakeApError("monitoring requires broadcasting first")
        self.state.mode = Mode.MONITORING

    # luring
    def attract(self, device: Device) -> AttractResult:
        """Schedule the device's reassociation onto the fake AP.

        Each attempt takes a seeded delay from the profile's connect range. A
        failed attempt gives up at the range maximum and retries at once, up to
        three attempts in total.
        """
        dev_id = device.device_id
        st = self.net.state(dev_id)
        if st.associated:
            raise AssociationError(f"{dev_id} still associated ({st.bound_ap.value})")
        self.broadcast()
        if self.net.strongest_visible() is not self.ap:
            raise FakeApError("fake AP signal does not dominate; no takeover")
        lo, hi = device.profile.fap_connect_range
        result = AttractResult(dev_id, self.sim.now)
        offset = 0.0
        for _ in range(MAX_ATTEMPTS):
            delay = self._rng.uniform(lo, hi)
            result.attempts.append(delay)
            if self._rng.random() < device.profile.fap_attempt_success:
                offset += delay
                break
            offset += hi
        else:
            result.failed = True
        self.attractions[dev_id] = result
        if not result.failed:
            at = self.sim.now + max(1, int(round(offset * 60)))
            self.sim.schedule(at, lambda: self._connect(dev_id, result), f"fap:connect:{dev_id}")
        return result

    def _connect(self, dev_id: str, result: AttractResult) -> None:
        st = self.net.state(dev_id)
        if st.associated:
            # reassociated elsewhere in the meantime
            result.failed = True
            return
        self.net.associate(dev_id, self.ap)
        self.state.connected_devices.add(dev_id)
        result.connected_at = self.sim.now

    def is_connected(self, dev_id: str) -> bool:
        st = self.net.state(dev_id)
        return st.bound_ap is Binding.FAKE and st.bssid == self.ap.bssid

    # capture
    def capture(self, device_id: str) -> CaptureLog:
        """Start (or continue) capturing and return the device's log so far."""
        if self.state.mode is not Mode.MONITORING:
            if self.state.mode is Mode.DORMANT:
                raise FakeApError("monitoring requires broadcasting first")
            raise FakeApError("fake AP is not in monitoring mode")
        if not self.is_connected(device_id):
            raise FakeApError(f"{device_id} is not connected to the fake AP")
        start = self._capture_from.setdefault(device_id, self.sim.now)
        return self.state.capture_log.slice(device_id, start)

    def _observe(self, p: Packet, count: int) -> None:
        if self.state.mode is not Mode.MONITORING:
            return
        for dev_id, direction in ((p.dst, "inbound"), (p.src, "outbound")):
            if dev_id in self._capture_from and self.is_connected(dev_id):
                self.state.capture_log.append(CaptureEntry(
                    self.sim.now, dev_id, direction, p.protocol.value, p.payload_bytes, count))

    # injection
    def inject_malicious(self, device: Device, spec: Optional[FloodSpec] = None,
                         protocols: Sequence[Protocol] = (Protocol.TCP_SYN, Protocol.UDP, Protocol.ICMP_ECHO),
                         minutes: float = 30.0) -> FloodHandle:
        """Send malicious traffic from the fake AP to a connected device.

        Without an explicit spec the protocol is drawn from ``protocols`` with
        the seeded generator and the rate sits one PPS under the disconnect
        threshold.
        """
        dev_id = device.device_id
        if not self.is_connected(dev_id):
            raise FakeApError(f"{dev_id} is not connected to the fake AP")
        if spec is None:
            proto = self._rng.choice(list(protocols))
            spec = FloodSpec(proto, dev_id, device.profile.injection_rate(), PayloadClass.NP,
                             max_duration=minutes)
        if spec.target != dev_id:
            raise FakeApError("injection spec targets a different device")
        self.state.injection_active[dev_id] = spec
        handle = self.attacker.launch_flood(spec, src=self.node_id, keep_going=lambda: self._still_here(dev_id))
        self.handles[dev_id] = handle
        return handle

    def _still_here(self, dev_id: str) -> bool:
        if self.is_connected(dev_id):
            return True
        self.state.injection_active.pop(dev_id, None)
        self.state.connected_devices.discard(dev_id)
        return False
