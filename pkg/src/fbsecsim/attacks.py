"""Deterministic attack traffic generators.

Floods are perfectly periodic: packet n of an aggregate-rate-r flood is
due at start + floor(n * 1e6 / r) microseconds, and k attackers split the
stream round-robin with evenly spaced phase offsets, so every count in the
acceptance math is exact.  Generators are lazily chained through the
scheduler (one live event per attacker), and once a unicast target goes
unresponsive the remainder is accounted in bulk since nothing else could
observe it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ScheduleOverflow
from .fbnet import LANE_NET, Scheduler
from .transport import (
    DeviceModel,
    DeviceState,
    Endpoint,
    GroupAddress,
    Packet,
    Proto,
    Transport,
)

US = 1_000_000


class AttackKind(Enum):
    SPOOF_PUBLISH = "spoof_publish"
    UDP_FLOOD = "udp_flood"
    SYN_FLOOD = "syn_flood"
    ICMP_FLOOD = "icmp_flood"


FLOOD_KINDS = {AttackKind.UDP_FLOOD, AttackKind.SYN_FLOOD, AttackKind.ICMP_FLOOD}

_FLOOD_PROTO = {
    AttackKind.UDP_FLOOD: Proto.UDP,
    AttackKind.SYN_FLOOD: Proto.TCP_SYN,
    AttackKind.ICMP_FLOOD: Proto.ICMP_ECHO,
}


@dataclass
class AttackSpec:
    name: str
    kind: AttackKind
    attacker_id: str
    target: Endpoint | GroupAddress
    claimed_src: Endpoint | None = None      # spoofed header source
    payload: bytes = b"\x00"
    rate: int = 0                            # aggregate packets/second (floods)
    start: int = 0                           # virtual microseconds
    stop: int = 0
    send_times: tuple[int, ...] = ()         # SPOOF_PUBLISH: exactly these
    attacker_count: int = 1

    def validate(self, event_budget: int) -> None:
        if self.kind in FLOOD_KINDS:
            if self.rate <= 0:
                raise ValueError(f"{self.name}: flood rate must be positive")
            if self.start >= self.stop:
                raise ValueError(f"{self.name}: start must precede stop")
            if self.attacker_count < 1:
                raise ValueError(f"{self.name}: attacker_count must be >= 1")
            if self.rate % self.attacker_count:
                raise ValueError(f"{self.name}: rate must divide evenly across attackers")
            if self.rate * (self.stop - self.start) // US > event_budget:
                raise ScheduleOverflow(
                    f"{self.name}: {self.rate}/s over {(self.stop - self.start) / US:.3f}s "
                    f"exceeds the event budget of {event_budget}")
        elif self.kind is AttackKind.SPOOF_PUBLISH:
            if not self.send_times:
                raise ValueError(f"{self.name}: spoof needs at least one send time")


def craft_spoofed_publish(transport: Transport, attacker_id: str,
                          claimed_src: Endpoint, group: GroupAddress,
                          payload: bytes) -> Packet:
    """A packet wearing someone else's header; ground truth stays ours."""
    return transport.make_packet(Proto.UDP, claimed_src, group, payload, attacker_id)


def flood_count(spec: AttackSpec) -> int:
    """Exact per-attacker packet count over [start, stop)."""
    per_rate = spec.rate // spec.attacker_count
    return per_rate * (spec.stop - spec.start) // US


def flood_times(spec: AttackSpec, attacker_index: int) -> list[int]:
    """Send instants for one attacker; aggregate interleaves to the full rate."""
    per_rate = spec.rate // spec.attacker_count
    phase = attacker_index * US // spec.rate
    n = flood_count(spec)
    return [spec.start + phase + (i * US) // per_rate for i in range(n)]


def attacker_device(transport: Transport, device_id: str, address: int) -> DeviceModel:
    """Attackers have effectively unlimited capacity; they never degrade."""
    dev = DeviceModel(device_id, address, capacity=2**62, critical_rate=2**62)
    transport.add_device(dev)
    return dev


def schedule_spoof(spec: AttackSpec, transport: Transport, scheduler: Scheduler) -> None:
    def fire():
        pkt = craft_spoofed_publish(transport, spec.attacker_id,
                                    spec.claimed_src, spec.target, spec.payload)
        transport.send(pkt)

    for t in spec.send_times:
        scheduler.at(t, fire)


class _FloodPump:
    """One attacker's packet stream, self-rescheduling at delivery times."""

    def __init__(self, spec: AttackSpec, attacker_index: int, src: Endpoint,
                 transport: Transport, scheduler: Scheduler):
        self.spec = spec
        self.src = src
        self.origin = src.device_id  # ground truth survives header rotation
        self.transport = transport
        self.scheduler = scheduler
        self.proto = _FLOOD_PROTO[spec.kind]
        self.times = flood_times(spec, attacker_index)
        self.i = 0
        self.syn_rotate = spec.kind is AttackKind.SYN_FLOOD
        if isinstance(spec.target, Endpoint):
            self.target_device = transport.devices.get(spec.target.device_id)
        else:
            self.target_device = None

    def start(self) -> None:
        if self.times:
            self._arm(0)

    def _arm(self, i: int) -> None:
        self.i = i
        self.scheduler.at(self.times[i] + self.transport.latency_us, self._pump,
                          lane=LANE_NET, key=(self.origin, i))

    def _pump(self) -> None:
        spec = self.spec
        dev = self.target_device
        if dev is not None and dev.state is DeviceState.UNRESPONSIVE:
            dev.bulk_unresponsive_drop(len(self.times) - self.i)
            return
        send_time = self.times[self.i]
        src = self.src
        if self.syn_rotate:
            # Rotate the claimed source so the SYN-ACKs vanish and no ACK
            # ever completes a handshake.
            rot = (src.address & 0xFFFF0000) | (self.i % 0xFFFE + 1)
            src = Endpoint(f"ghost-{self.i}", rot, 1024 + self.i % 60000)
        pkt = Packet(self.proto, src, spec.target, spec.payload, send_time,
                     self.origin, self.transport.next_seq())
        if isinstance(spec.target, GroupAddress):
            for member in self.transport.members(spec.target.address):
                self.transport.deliver(pkt, member)
        else:
            self.transport.deliver(pkt, spec.target)
        if self.i + 1 < len(self.times):
            self._arm(self.i + 1)


def schedule_flood(spec: AttackSpec, transport: Transport, scheduler: Scheduler,
                   base_address: int) -> list[DeviceModel]:
    """Create the attacker devices and arm one pump per attacker."""
    devices = []
    for j in range(spec.attacker_count):
        dev_id = spec.attacker_id if spec.attacker_count == 1 else f"{spec.attacker_id}.{j}"
        address = base_address + j
        dev = transport.devices.get(dev_id) or attacker_device(transport, dev_id, address)
        devices.append(dev)
        src = Endpoint(dev_id, address, 40000 + j)
        _FloodPump(spec, j, src, transport, scheduler).start()
    return devices
