"""Scripted background traffic: alternating elephant flows plus Poisson mice.

Script line grammar (one pattern file per link-profile phase)::

    <start_s> <stop_s> <flow_id> <ELEPHANT|MICE> <adaptive|nonadaptive> \
        <rate_bps | mean_interval_s burst_bytes [burst_duration_ms]>

``#`` starts a comment.  The pattern repeats every ``period_s`` seconds,
anchored at the start of its phase, and switches to the next phase's pattern
exactly at the transition time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .sim import substream

ELEPHANT_PACKET_BYTES = 1000
MICE_PACKET_BYTES = 1500
DEFAULT_PERIOD_S = 8.0
DEFAULT_BURST_DURATION_MS = 10.0


class ScriptError(Exception):
    """Malformed or inconsistent traffic script."""


@dataclass(frozen=True)
class BurstSpec:
    mean_interval_s: float
    burst_bytes: int
    burst_duration_ms: float = DEFAULT_BURST_DURATION_MS

    def __post_init__(self):
        if self.mean_interval_s <= 0:
            raise ScriptError("mean_interval_s must be > 0")
        if self.burst_bytes <= 0:
            raise ScriptError("burst_bytes must be > 0")

    @property
    def mean_rate_bps(self) -> float:
        return self.burst_bytes * 8.0 / self.mean_interval_s


@dataclass(frozen=True)
class TrafficEvent:
    start_s: float
    stop_s: float
    flow_id: str
    kind: str  # elephant | mice
    adaptive: bool
    rate_bps: float = 0.0
    burst: Optional[BurstSpec] = None

    def __post_init__(self):
        if self.start_s < 0:
            raise ScriptError(f"negative start time for flow {self.flow_id}")
        if self.start_s >= self.stop_s:
            raise ScriptError(
                f"flow {self.flow_id}: start {self.start_s} not before stop {self.stop_s}"
            )
        if self.kind not in ("elephant", "mice"):
            raise ScriptError(f"unknown flow kind {self.kind!r}")
        if self.kind == "elephant" and self.rate_bps < 0:
            raise ScriptError("elephant rate must be >= 0")
        if self.kind == "mice" and self.burst is None:
            raise ScriptError("mice event needs a burst spec")

    def active_at(self, local_s: float) -> bool:
        return self.start_s <= local_s < self.stop_s

    def mean_rate_bps(self) -> float:
        if self.kind == "elephant":
            return self.rate_bps
        return self.burst.mean_rate_bps


@dataclass(frozen=True)
class TrafficPattern:
    """Validated, period-normalized events for one link-profile phase."""

    events: tuple[TrafficEvent, ...]
    period_s: float = DEFAULT_PERIOD_S

    def __post_init__(self):
        if self.period_s <= 0:
            raise ScriptError("period_s must be > 0")
        for ev in self.events:
            if ev.stop_s > self.period_s + 1e-9:
                raise ScriptError(
                    f"flow {ev.flow_id}: stop {ev.stop_s} exceeds period {self.period_s}"
                )
        by_flow: dict[str, list[TrafficEvent]] = {}
        for ev in self.events:
            by_flow.setdefault(ev.flow_id, []).append(ev)
        for flow_id, evs in by_flow.items():
            evs = sorted(evs, key=lambda e: e.start_s)
            for a, b in zip(evs, evs[1:]):
                if b.start_s < a.stop_s:
                    raise ScriptError(f"overlapping windows for flow {flow_id!r}")

    def nonadaptive_load_bps(self, local_s: float) -> float:
        load = 0.0
        for ev in self.events:
            if not ev.adaptive and ev.active_at(local_s):
                load += ev.mean_rate_bps()
        return load

    def boundaries(self) -> list[float]:
        pts = {0.0, self.period_s}
        for ev in self.events:
            pts.add(ev.start_s)
            pts.add(ev.stop_s)
        return sorted(pts)


EMPTY_PATTERN = TrafficPattern(events=())


def parse_script(text: str, period_s: float = DEFAULT_PERIOD_S) -> TrafficPattern:
    """Parse one phase's pattern file into a TrafficPattern."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 6:
            raise ScriptError(f"line {lineno}: expected at least 6 fields")
        try:
            start_s, stop_s = float(fields[0]), float(fields[1])
        except ValueError as exc:
            raise ScriptError(f"line {lineno}: bad times") from exc
        flow_id = fields[2]
        kind = fields[3].lower()
        if kind not in ("elephant", "mice"):
            raise ScriptError(f"line {lineno}: unknown flow kind {fields[3]!r}")
        mode = fields[4].lower()
        if mode not in ("adaptive", "nonadaptive"):
            raise ScriptError(f"line {lineno}: expected adaptive|nonadaptive")
        try:
            if kind == "elephant":
                event = TrafficEvent(
                    start_s, stop_s, flow_id, kind, mode == "adaptive",
                    rate_bps=float(fields[5]),
                )
            else:
                if len(fields) < 7:
                    raise ScriptError(
                        f"line {lineno}: mice needs mean_interval_s and burst_bytes"
                    )
                duration = (
                    float(fields[7]) if len(fields) > 7 else DEFAULT_BURST_DURATION_MS
                )
                event = TrafficEvent(
                    start_s, stop_s, flow_id, kind, mode == "adaptive",
                    burst=BurstSpec(float(fields[5]), int(float(fields[6])), duration),
                )
        except ScriptError as exc:
            raise ScriptError(f"line {lineno}: {exc}") from exc
        events.append(event)
    return TrafficPattern(events=tuple(events), period_s=period_s)


def serialize_script(pattern: TrafficPattern) -> str:
    """Inverse of parse_script (round-trips to an equal pattern)."""
    lines = []
    for ev in pattern.events:
        mode = "adaptive" if ev.adaptive else "nonadaptive"
        if ev.kind == "elephant":
            tail = repr(ev.rate_bps)
        else:
            tail = (
                f"{ev.burst.mean_interval_s!r} {ev.burst.burst_bytes} "
                f"{ev.burst.burst_duration_ms!r}"
            )
        lines.append(
            f"{ev.start_s!r} {ev.stop_s!r} {ev.flow_id} {ev.kind.upper()} {mode} {tail}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class TrafficScript:
    """One pattern per link-profile phase, keyed by profile name."""

    patterns: dict[str, TrafficPattern] = field(default_factory=dict)
    period_s: float = DEFAULT_PERIOD_S

    def pattern_for(self, profile_name: str) -> TrafficPattern:
        return self.patterns.get(profile_name, EMPTY_PATTERN)

    def adaptive_events(self, profile_name: str) -> list[TrafficEvent]:
        return [e for e in self.pattern_for(profile_name).events if e.adaptive]


@dataclass(frozen=True)
class Injection:
    """A single background packet handed to the simulator."""

    time_s: float
    flow_id: str
    size_bytes: int


def offered_load(script: Optional[TrafficScript], scenario, t_s: float) -> float:
    """Expected nonadaptive background load (bits/second) at time t.

    Elephants contribute their scripted rates; mice contribute their mean
    rate burst_bytes*8/mean_interval_s.  Adaptive flows are excluded: they
    yield to the measured flow and are accounted by the fair share instead.
    """
    if t_s < 0:
        raise ScriptError("offered_load time must be >= 0")
    if script is None:
        return 0.0
    phase_start, profile_name = scenario.phase_at(t_s)
    pattern = script.pattern_for(profile_name)
    if not pattern.events:
        return 0.0
    local = (t_s - phase_start) % pattern.period_s
    return pattern.nonadaptive_load_bps(local)


def generate_events(
    script: Optional[TrafficScript], scenario, seed: int, t_end_s: float
) -> list[Injection]:
    """Expand the script into concrete packet injections over [0, t_end).

    Elephant flows emit evenly spaced packets at their rate inside their
    windows; mice flows draw exponential inter-burst gaps from a per-flow
    substream, so the draw sequence depends only on (seed, flow, draw index).
    """
    if script is None:
        return []
    injections: list[Injection] = []
    for phase_start, phase_end, profile_name in scenario.phases(t_end_s):
        pattern = script.pattern_for(profile_name)
        if not pattern.events:
            continue
        period = pattern.period_s
        n_periods = math.ceil((phase_end - phase_start) / period)
        for ev in pattern.events:
            if ev.adaptive:
                continue  # adaptive flows are driven by their own transport
            if ev.kind == "mice":
                rng = substream(seed, f"traffic/{profile_name}/{ev.flow_id}")
            for k in range(n_periods):
                w_start = phase_start + k * period + ev.start_s
                w_stop = min(phase_start + k * period + ev.stop_s, phase_end)
                if w_start >= w_stop:
                    continue
                if ev.kind == "elephant":
                    injections.extend(_elephant_window(ev, w_start, w_stop))
                else:
                    injections.extend(_mice_window(ev, w_start, w_stop, rng))
    injections.sort(key=lambda inj: (inj.time_s, inj.flow_id))
    return injections


def _elephant_window(ev: TrafficEvent, w_start: float, w_stop: float):
    if ev.rate_bps <= 0:
        return
    gap = ELEPHANT_PACKET_BYTES * 8.0 / ev.rate_bps
    n = int((w_stop - w_start) / gap)
    for i in range(n):
        yield Injection(w_start + i * gap, ev.flow_id, ELEPHANT_PACKET_BYTES)


def _mice_window(ev: TrafficEvent, w_start: float, w_stop: float, rng):
    spec = ev.burst
    t = w_start + rng.exponential(spec.mean_interval_s)
    while t < w_stop:
        n_pkts = math.ceil(spec.burst_bytes / MICE_PACKET_BYTES)
        spacing = spec.burst_duration_ms / 1000.0 / n_pkts
        remaining = spec.burst_bytes
        for i in range(n_pkts):
            size = min(MICE_PACKET_BYTES, remaining)
            remaining -= size
            yield Injection(t + i * spacing, ev.flow_id, size)
        t += rng.exponential(spec.mean_interval_s)
