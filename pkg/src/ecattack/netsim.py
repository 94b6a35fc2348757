"""Simulation core: integer-second clock, event queue, access points and
device association.

Events at the same tick fire by ``priority`` and then by insertion order, so
flood batches (priority 0) always land before the per-second meter reading
(priority 10) of the same tick.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional


class SimulationError(Exception):
    """Raised when an operation violates a simulator precondition."""


class PastEventError(SimulationError):
    pass


class AssociationError(SimulationError):
    pass


class UnknownNodeError(SimulationError):
    pass


class SimClock:
    """Whole-second simulation clock. Only ever moves forward."""

    def __init__(self) -> None:
        self._now = 0

    @property
    def now(self) -> int:
        return self._now

    def _set(self, t: int) -> None:
        if t < self._now:
            raise SimulationError(f"clock cannot move backwards ({t} < {self._now})")
        self._now = t


@dataclass(order=True)
class Event:
    time: int
    priority: int
    seq: int
    label: str = field(compare=False)
    action: Optional[Callable[[], None]] = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False)
    fired: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


class Simulator:
    """Deterministic discrete-event engine at 1-second resolution."""

    def __init__(self, keep_trace: bool = True) -> None:
        self.clock = SimClock()
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.keep_trace = keep_trace
        self.trace: list[tuple[int, str]] = []

    @property
    def now(self) -> int:
        return self.clock.now

    def schedule(
        self,
        time: int,
        action: Optional[Callable[[], None]] = None,
        label: str = "event",
        priority: int = 0,
    ) -> Event:
        time = int(time)
        if time < self.now:
            raise PastEventError(f"past event: t={time} < now={self.now}")
        ev = Event(time, priority, next(self._seq), label, action)
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay: int, action=None, label: str = "event", priority: int = 0) -> Event:
        return self.schedule(self.now + int(delay), action, label, priority)

    def pending(self) -> int:
        return sum(1 for ev in self._heap if not ev.cancelled)

    def peek_time(self) -> Optional[int]:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0].time if self._heap else None

    def advance(self, to: int) -> list[Event]:
        """Fire every event with time <= ``to`` and leave the clock at ``to``.

        Actions may schedule new events; those are fired too if they fall
        inside the window.
        """
        to = int(to)
        if to < self.now:
            raise SimulationError(f"cannot advance backwards to {to} (now={self.now})")
        fired: list[Event] = []
        while self._heap and self._heap[0].time <= to:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.clock._set(ev.time)
            ev.fired = True
            if self.keep_trace:
                self.trace.append((ev.time, ev.label))
            if ev.action is not None:
                ev.action()
            fired.append(ev)
        self.clock._set(to)
        return fired

    def run_until(self, predicate: Callable[[], bool], limit: int) -> int:
        """Advance one tick at a time until ``predicate()`` holds or ``limit``."""
        while self.now < limit and not predicate():
            self.advance(self.now + 1)
        return self.now


# --- access points and association -----------------------------------------


@dataclass(frozen=True)
class AccessPoint:
    ssid: str
    bssid: str
    channel: int
    security_profile: str
    signal_strength: float
    is_fake: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.channel <= 14:
            raise ValueError(f"channel must be in 1..14, got {self.channel}")
        parts = self.bssid.split(":")
        if len(parts) != 6 or not all(len(p) == 2 for p in parts):
            raise ValueError(f"bssid must be 6 colon-separated bytes, got {self.bssid!r}")
        int("".join(parts), 16)

    @property
    def node_id(self) -> str:
        return ("fap:" if self.is_fake else "ap:") + self.bssid

    def identity(self) -> tuple[str, str, int, str]:
        return (self.ssid, self.bssid, self.channel, self.security_profile)


class Binding(enum.Enum):
    LEGITIMATE = "legitimate"
    FAKE = "fake"
    DISCONNECTED = "disconnected"


@dataclass(frozen=True)
class Transition:
    t: int
    from_state: Binding
    to_state: Binding
    bssid: Optional[str]


@dataclass
class AssociationState:
    device_id: str
    bound_ap: Binding = Binding.DISCONNECTED
    bssid: Optional[str] = None
    since: int = 0
    history: list[Transition] = field(default_factory=list)

    @property
    def associated(self) -> bool:
        return self.bound_ap is not Binding.DISCONNECTED

    def state_at(self, t: int) -> Binding:
        """Binding in force at the end of tick ``t``, replayed from history."""
        state = Binding.DISCONNECTED
        for tr in self.history:
            if tr.t > t:
                break
            state = tr.to_state
        return state


class Protocol(str, enum.Enum):
    TCP_SYN = "TCP_SYN"
    UDP = "UDP"
    ICMP_ECHO = "ICMP_ECHO"

    @classmethod
    def parse(cls, text: str) -> "Protocol":
        key = text.strip().upper()
        aliases = {"TCP": "TCP_SYN", "SYN": "TCP_SYN", "ICMP": "ICMP_ECHO", "ECHO": "ICMP_ECHO"}
        return cls(aliases.get(key, key))


TCP_FLAGS = frozenset({"SYN", "ACK", "FIN", "PSH", "URG"})
PAYLOAD_SIZES = (0, 1500)


@dataclass(frozen=True)
class Packet:
    src: str
    dst: str
    protocol: Protocol
    dst_port: Optional[int] = None
    payload_bytes: int = 0
    tcp_flags: Optional[frozenset] = None
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.protocol is Protocol.ICMP_ECHO and self.dst_port is not None:
            raise ValueError("ICMP packets carry no destination port")
        if self.dst_port is not None and not 0 <= self.dst_port <= 65535:
            raise ValueError(f"port out of range: {self.dst_port}")
        if self.payload_bytes not in PAYLOAD_SIZES:
            raise ValueError(f"payload_bytes must be one of {PAYLOAD_SIZES}")
        if self.tcp_flags is not None:
            if self.protocol is not Protocol.TCP_SYN:
                raise ValueError("tcp_flags only apply to TCP packets")
            bad = set(self.tcp_flags) - TCP_FLAGS
            if bad:
                raise ValueError(f"unknown TCP flags: {sorted(bad)}")

    @property
    def size(self) -> int:
        return self.payload_bytes


class Delivery(enum.Enum):
    DELIVERED = "delivered"
    DROPPED = "dropped"


# Hook signature: (packet, count, direction) where direction is relative to the
# watched device.
PacketObserver = Callable[[Packet, int], None]


class Network:
    """Nodes, access points and who can reach whom.

    A packet reaches a device when the device is bound to an AP that the
    sender can reach. Every node reaches the APs it has joined; an AP
    reaches itself.
    """

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim
        self.aps: dict[str, AccessPoint] = {}
        self.devices: dict[str, AssociationState] = {}
        self.reach: dict[str, set[str]] = {}
        self.dropped: dict[str, int] = {}
        self.delivered: dict[str, int] = {}
        self._sinks: dict[str, Callable[[Packet, int], None]] = {}
        self._observers: list[PacketObserver] = []

    # nodes
    def add_ap(self, ap: AccessPoint) -> AccessPoint:
        self.aps[ap.node_id] = ap
        self.reach.setdefault(ap.node_id, set()).add(ap.node_id)
        return ap

    def remove_ap(self, ap: AccessPoint) -> None:
        self.aps.pop(ap.node_id, None)

    def add_device(self, device_id: str, sink: Optional[Callable[[Packet, int], None]] = None) -> AssociationState:
        if device_id in self.devices:
            raise SimulationError(f"duplicate device {device_id!r}")
        state = AssociationState(device_id, since=self.sim.now)
        self.devices[device_id] = state
        self.reach.setdefault(device_id, set())
        if sink is not None:
            self._sinks[device_id] = sink
        return state

    def add_node(self, node_id: str) -> None:
        self.reach.setdefault(node_id, set())

    def join(self, node_id: str, ap: AccessPoint) -> None:
        if node_id not in self.reach:
            raise UnknownNodeError(node_id)
        self.reach[node_id].add(ap.node_id)

    def observe(self, observer: PacketObserver) -> None:
        self._observers.append(observer)

    def state(self, device_id: str) -> AssociationState:
        try:
            return self.devices[device_id]
        except KeyError:
            raise UnknownNodeError(f"unknown device {device_id!r}") from None

    def bound_ap(self, device_id: str) -> Optional[AccessPoint]:
        st = self.state(device_id)
        if not st.associated:
            return None
        kind = "fap:" if st.bound_ap is Binding.FAKE else "ap:"
        return self.aps.get(kind + st.bssid)

    # association
    def _transition(self, st: AssociationState, to: Binding, bssid: Optional[str]) -> None:
        st.history.append(Transition(self.sim.now, st.bound_ap, to, bssid))
        st.bound_ap = to
        st.bssid = bssid
        st.since = self.sim.now

    def associate(self, device_id: str, ap: AccessPoint) -> AssociationState:
        st = self.state(device_id)
        if ap.node_id not in self.aps:
            raise SimulationError(f"AP {ap.node_id} is not on the air")
        if ap.is_fake and st.associated:
            raise AssociationError(f"{device_id} still associated ({st.bound_ap.value})")
        if st.associated:
            if st.bssid == ap.bssid and st.bound_ap is (Binding.FAKE if ap.is_fake else Binding.LEGITIMATE):
                return st
            raise AssociationError(f"{device_id} still associated ({st.bound_ap.value})")
        self._transition(st, Binding.FAKE if ap.is_fake else Binding.LEGITIMATE, ap.bssid)
        return st

    def disconnect(self, device_id: str) -> AssociationState:
        st = self.state(device_id)
        if st.associated:
            self._transition(st, Binding.DISCONNECTED, None)
        return st

    def strongest_visible(self) -> Optional[AccessPoint]:
        if not self.aps:
            return None
        # ties go to the legitimate AP
        return max(self.aps.values(), key=lambda ap: (ap.signal_strength, not ap.is_fake))

    # delivery
    def reachable(self, src: str, dst: str) -> bool:
        if src in self.devices and not self.devices[src].associated:
            return False
        if dst in self.aps:
            return True
        ap = self.bound_ap(dst)
        return ap is not None and ap.node_id in self.reach.get(src, ())

    def deliver(self, p: Packet, count: int = 1) -> Delivery:
        """Deliver ``count`` identical packets (an aggregated batch)."""
        if p.src not in self.reach:
            raise UnknownNodeError(f"unknown source {p.src!r}")
        if p.dst not in self.devices and p.dst not in self.aps:
            raise UnknownNodeError(f"unknown destination {p.dst!r}")
        if count <= 0:
            return Delivery.DELIVERED
        if not self.reachable(p.src, p.dst):
            self.dropped[p.dst] = self.dropped.get(p.dst, 0) + count
            return Delivery.DROPPED
        self.delivered[p.dst] = self.delivered.get(p.dst, 0) + count
        for obs in self._observers:
            obs(p, count)
        sink = self._sinks.get(p.dst)
        if sink is not None:
            sink(p, count)
        return Delivery.DELIVERED
