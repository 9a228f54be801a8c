"""Deterministic packet-level discrete-event simulator for dumbbell networks.

The engine processes events in (time, insertion-sequence) order, so two runs
with the same seed and the same scenario produce identical traces on any
platform.  Links are FIFO byte-queues with a serialization stage, Bernoulli
loss, and one-way propagation delay; the bottleneck link profile can be
swapped at scheduled times without disturbing packets already on the wire.
"""

from __future__ import annotations

import hashlib
import heapq
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class SimError(Exception):
    """Invalid simulator construction or usage."""


def substream(seed: int, name: str) -> np.random.Generator:
    """Derive a named RNG substream from a master seed.

    Derivation is fixed (seed plus sha256 of the name), so draws taken from
    one substream never shift because another subsystem started consuming
    its own randomness.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "big") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + words)
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Link profiles and schedules


@dataclass(frozen=True)
class LinkProfile:
    """Physical behavior of a link: rate, one-way delay, loss, buffer size.

    ``queue_capacity_bytes`` defaults to one bandwidth-delay product of the
    profile (floored at 1500 bytes) when not given explicitly.
    """

    rate_bps: float
    one_way_delay_ms: float
    loss_prob: float = 0.0
    queue_capacity_bytes: int = 0

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise SimError(f"rate_bps must be > 0, got {self.rate_bps}")
        if self.one_way_delay_ms < 0:
            raise SimError("one_way_delay_ms must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise SimError(f"loss_prob must be in [0, 1], got {self.loss_prob}")
        if self.queue_capacity_bytes == 0:
            object.__setattr__(
                self, "queue_capacity_bytes", max(1500, round(self.bdp_bytes))
            )
        if self.queue_capacity_bytes <= 0:
            raise SimError("queue_capacity_bytes must be > 0")

    @property
    def nominal_rtt_ms(self) -> float:
        """Nominal round-trip time: twice the one-way propagation delay."""
        return 2.0 * self.one_way_delay_ms

    @property
    def bdp_bytes(self) -> float:
        """Bandwidth-delay product over the nominal RTT, in bytes."""
        return self.rate_bps / 8.0 * (self.nominal_rtt_ms / 1000.0)


# Access links are fast enough not to shape cross-side traffic.
DEFAULT_ACCESS_PROFILE = LinkProfile(
    rate_bps=1e9, one_way_delay_ms=0.0, loss_prob=0.0,
    queue_capacity_bytes=10_000_000,
)


@dataclass(frozen=True)
class TransitionSchedule:
    """Timed sequence of profiles for a link; entry 0 is the initial profile."""

    entries: tuple[tuple[float, LinkProfile], ...]

    def __post_init__(self):
        if not self.entries:
            raise SimError("transition schedule must not be empty")
        times = [t for t, _ in self.entries]
        if times[0] != 0.0:
            raise SimError("first transition entry must be at time 0")
        if any(t < 0 for t in times):
            raise SimError("transition times must be >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SimError("transition times must be strictly ascending")

    def active_index(self, now_s: float) -> int:
        idx = 0
        for i, (t, _) in enumerate(self.entries):
            if t <= now_s:
                idx = i
            else:
                break
        return idx

    def active_at(self, now_s: float) -> LinkProfile:
        return self.entries[self.active_index(now_s)][1]


def apply_transition(schedule: TransitionSchedule, now_s: float) -> LinkProfile:
    """Profile of the latest schedule entry with at_time_s <= now."""
    return schedule.active_at(now_s)


# ---------------------------------------------------------------------------
# Topology


@dataclass(frozen=True)
class Topology:
    """Dumbbell host layout: two sides joined by a single bottleneck link."""

    ls_hosts: tuple[str, ...]
    rs_hosts: tuple[str, ...]
    bottleneck_link: str = "bottleneck"

    @property
    def hosts(self) -> tuple[str, ...]:
        return self.ls_hosts + self.rs_hosts

    @property
    def access_links(self) -> tuple[str, ...]:
        return tuple(f"acc:{h}" for h in self.hosts)

    def side(self, host: str) -> str:
        if host in self.ls_hosts:
            return "ls"
        if host in self.rs_hosts:
            return "rs"
        raise SimError(f"unknown host {host!r}")


def build_dumbbell(ls_hosts, rs_hosts) -> Topology:
    """Validate host lists and return the dumbbell topology."""
    ls = tuple(ls_hosts)
    rs = tuple(rs_hosts)
    if not ls or not rs:
        raise SimError("each side of the dumbbell needs at least one host")
    all_hosts = ls + rs
    if len(set(all_hosts)) != len(all_hosts):
        raise SimError("duplicate host ids in topology")
    return Topology(ls_hosts=ls, rs_hosts=rs)


# ---------------------------------------------------------------------------
# Packets and events


@dataclass
class Packet:
    """A unit of transmission; `route`/`hop` carry it across consecutive links."""

    flow_id: str
    seq: int
    size_bytes: int
    kind: str  # data | ack | syn | synack
    dst: str = ""
    payload: object = None
    inject_time_s: float = -1.0
    enqueue_time_s: float = -1.0
    route: tuple = ()
    hop: int = 0

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise SimError("packet size must be > 0")


class Event:
    __slots__ = ("time_s", "seq", "fn", "args", "cancelled")

    def __init__(self, time_s, seq, fn, args):
        self.time_s = time_s
        self.seq = seq
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    def __lt__(self, other):
        return (self.time_s, self.seq) < (other.time_s, other.seq)


@dataclass
class LinkCounters:
    enqueued: int = 0
    delivered: int = 0
    tail_dropped: int = 0
    loss_dropped: int = 0

    def in_flight(self, queued: int, on_wire: int) -> int:
        return queued + on_wire


class DirectedLink:
    """One direction of a link: FIFO queue, serializer, loss, propagation.

    The profile is looked up when a packet starts serialization, so packets
    already on the wire keep their departure times across a transition while
    queued packets pick up the new rate/delay/loss.  Delivery times are
    clamped to be non-decreasing: the pipe never reorders.
    """

    def __init__(self, sim: "Simulator", link_id: str, profile: LinkProfile):
        self.sim = sim
        self.id = link_id
        self.profile = profile
        self.queue: deque[Packet] = deque()
        self.queued_bytes = 0
        self.on_wire = 0
        self.busy = False
        self.last_delivery_s = 0.0
        self.counters = LinkCounters()
        self._loss_rng = sim.substream(f"loss/{link_id}")

    def transmit(self, packet: Packet) -> bool:
        """Enqueue a packet; returns False on tail drop."""
        self.counters.enqueued += 1
        if self.queued_bytes + packet.size_bytes > self.profile.queue_capacity_bytes:
            self.counters.tail_dropped += 1
            self.sim._trace("tail_drop", self.id, packet)
            return False
        packet.enqueue_time_s = self.sim.now_s
        self.queue.append(packet)
        self.queued_bytes += packet.size_bytes
        self.sim._trace("enqueue", self.id, packet)
        if not self.busy:
            self._start_serialization()
        return True

    def _start_serialization(self):
        packet = self.queue[0]
        profile = self.profile  # captured: rate/delay/loss fixed once on the wire
        ser_s = packet.size_bytes * 8.0 / profile.rate_bps
        # Always draw, so loss sweeps never shift the draw sequence.
        lost = self._loss_rng.random() < profile.loss_prob
        delay_s = profile.one_way_delay_ms / 1000.0
        self.busy = True
        self.sim.schedule_at(
            self.sim.now_s + ser_s, self._finish_serialization, (lost, delay_s)
        )

    def _finish_serialization(self, lost: bool, delay_s: float):
        packet = self.queue.popleft()
        self.queued_bytes -= packet.size_bytes
        if lost:
            self.counters.loss_dropped += 1
            self.sim._trace("loss_drop", self.id, packet)
        else:
            arrival = max(self.sim.now_s + delay_s, self.last_delivery_s)
            self.last_delivery_s = arrival
            self.on_wire += 1
            self.sim.schedule_at(arrival, self._arrive, (packet,))
        if self.queue:
            self._start_serialization()
        else:
            self.busy = False

    def _arrive(self, packet: Packet):
        self.on_wire -= 1
        self.counters.delivered += 1
        self.sim._trace("deliver", self.id, packet)
        self.sim._hop(packet)

    def conservation_ok(self) -> bool:
        c = self.counters
        return c.enqueued == (
            c.delivered + c.tail_dropped + c.loss_dropped
            + len(self.queue) + self.on_wire
        )


class Simulator:
    """Single-threaded, self-contained discrete-event simulator instance.

    Instances share no state and can run in parallel or move between
    threads; all randomness flows from the constructor seed through named
    substreams.
    """

    def __init__(self, seed: int = 0, record_trace: bool = False):
        self.seed = seed
        self.now_s = 0.0
        self.event_count = 0
        self._heap: list[Event] = []
        self._next_event_seq = 0
        self.links: dict[str, DirectedLink] = {}
        self.topology: Optional[Topology] = None
        self.schedule: Optional[TransitionSchedule] = None
        self.active_transition_index = 0
        self._handlers: dict[str, list[Callable[[Packet, float], None]]] = {}
        self._transition_listeners: list[Callable[[int, LinkProfile], None]] = []
        self._event_hooks: list[Callable[["Simulator"], None]] = []
        self.trace: Optional[list[tuple]] = [] if record_trace else None

    # -- randomness

    def substream(self, name: str) -> np.random.Generator:
        return substream(self.seed, name)

    # -- event queue

    def schedule_at(self, time_s: float, fn, args=()) -> Event:
        if time_s < self.now_s - 1e-12:
            raise SimError(f"cannot schedule at {time_s} before now {self.now_s}")
        ev = Event(max(time_s, self.now_s), self._next_event_seq, fn, args)
        self._next_event_seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, t_s: float) -> int:
        """Process every event with time <= t and advance the clock to t."""
        if t_s < self.now_s - 1e-12:
            raise SimError(f"run_until target {t_s} is before now {self.now_s}")
        processed = 0
        heap = self._heap
        while heap and heap[0].time_s <= t_s:
            ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now_s = ev.time_s
            ev.fn(*ev.args)
            self.event_count += 1
            processed += 1
            for hook in self._event_hooks:
                hook(self)
        self.now_s = max(self.now_s, t_s)
        return processed

    def add_event_hook(self, fn):
        self._event_hooks.append(fn)

    # -- network construction

    def configure_dumbbell(
        self,
        topology: Topology,
        schedule: TransitionSchedule,
        access_profile: LinkProfile = DEFAULT_ACCESS_PROFILE,
    ):
        self.topology = topology
        self.schedule = schedule
        initial = schedule.entries[0][1]
        self.links["bn:ls-rs"] = DirectedLink(self, "bn:ls-rs", initial)
        self.links["bn:rs-ls"] = DirectedLink(self, "bn:rs-ls", initial)
        for host in topology.hosts:
            self.links[f"acc:{host}:up"] = DirectedLink(
                self, f"acc:{host}:up", access_profile
            )
            self.links[f"acc:{host}:down"] = DirectedLink(
                self, f"acc:{host}:down", access_profile
            )
        for index, (t_s, profile) in enumerate(schedule.entries[1:], start=1):
            self.schedule_at(t_s, self._apply_transition, (index, profile))

    def _apply_transition(self, index: int, profile: LinkProfile):
        # Queued bytes above the new capacity are not flushed; only new
        # arrivals see the new capacity.
        self.active_transition_index = index
        self.links["bn:ls-rs"].profile = profile
        self.links["bn:rs-ls"].profile = profile
        self.sim_trace_row(("transition", index))
        for listener in self._transition_listeners:
            listener(index, profile)

    def on_transition(self, fn):
        self._transition_listeners.append(fn)

    def bottleneck_profile(self) -> LinkProfile:
        return self.links["bn:ls-rs"].profile

    # -- packet movement

    def attach(self, host: str, handler):
        """Register a receive handler for a host: handler(packet, now_s).

        Several endpoints may share a host; each handler filters by flow id.
        """
        if self.topology is None or host not in self.topology.hosts:
            raise SimError(f"unknown host {host!r}")
        self._handlers.setdefault(host, []).append(handler)

    def route(self, src: str, dst: str) -> tuple[str, ...]:
        topo = self.topology
        if topo is None:
            raise SimError("topology not configured")
        src_side, dst_side = topo.side(src), topo.side(dst)
        hops = [f"acc:{src}:up"]
        if src_side != dst_side:
            hops.append("bn:ls-rs" if src_side == "ls" else "bn:rs-ls")
        hops.append(f"acc:{dst}:down")
        return tuple(hops)

    def send(self, src: str, dst: str, packet: Packet):
        packet.route = self.route(src, dst)
        packet.hop = 0
        packet.dst = dst
        packet.inject_time_s = self.now_s
        self.links[packet.route[0]].transmit(packet)

    def _hop(self, packet: Packet):
        packet.hop += 1
        if packet.hop < len(packet.route):
            self.links[packet.route[packet.hop]].transmit(packet)
        else:
            for handler in self._handlers.get(packet.dst, ()):
                handler(packet, self.now_s)

    # -- tracing

    def _trace(self, kind: str, link_id: str, packet: Packet):
        if self.trace is not None:
            self.trace.append(
                (self.now_s, kind, link_id, packet.flow_id, packet.kind,
                 packet.seq, packet.size_bytes)
            )

    def sim_trace_row(self, row: tuple):
        if self.trace is not None:
            self.trace.append((self.now_s,) + row)

    def trace_bytes(self) -> bytes:
        if self.trace is None:
            raise SimError("trace recording was not enabled")
        return "\n".join(repr(row) for row in self.trace).encode("utf-8")
