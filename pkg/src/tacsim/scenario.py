"""Scenario description: link profiles, transition schedule, topology, traffic.

A scenario file is one YAML document::

    name: satcom-uhf
    seed: 1
    profiles:
      satcom: {rate_bps: 1000000, one_way_delay_ms: 500.0, loss_prob: 0.0,
               queue_capacity_bytes: 125000}
      uhf:    {rate_bps: 256000, one_way_delay_ms: 125.0, loss_prob: 0.03,
               queue_capacity_bytes: 8000}
    topology: {ls_hosts: [sender, traffic_src], rs_hosts: [receiver, traffic_sink]}
    transitions:
      - {at_time_s: 0.0, profile: satcom}
      - {at_time_s: 10.0, profile: uhf}
    traffic:
      period_s: 8.0
      scripts: {satcom: satcom.pattern, uhf: uhf.pattern}

Script values containing a newline are treated as inline pattern text;
anything else is a path resolved relative to the scenario file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .sim import (
    DEFAULT_ACCESS_PROFILE,
    LinkProfile,
    SimError,
    Topology,
    TransitionSchedule,
    build_dumbbell,
)
from .traffic import TrafficScript, parse_script

# Host roles used by the environment and the traffic engine.
SENDER_HOST = "sender"
RECEIVER_HOST = "receiver"
TRAFFIC_SRC_HOST = "traffic_src"
TRAFFIC_SINK_HOST = "traffic_sink"


class ScenarioError(Exception):
    """Invalid scenario document."""


@dataclass(frozen=True)
class Scenario:
    name: str
    profiles: dict[str, LinkProfile]
    topology: Topology
    transitions: tuple[tuple[float, str], ...]  # (at_time_s, profile name)
    traffic: Optional[TrafficScript] = None
    seed: int = 0
    access_profile: LinkProfile = DEFAULT_ACCESS_PROFILE

    def __post_init__(self):
        if not self.transitions:
            raise ScenarioError("scenario needs at least one transition entry")
        for _, name in self.transitions:
            if name not in self.profiles:
                raise ScenarioError(f"transition references unknown profile {name!r}")

    def schedule(self) -> TransitionSchedule:
        return TransitionSchedule(
            entries=tuple((t, self.profiles[n]) for t, n in self.transitions)
        )

    def profile_at(self, t_s: float) -> LinkProfile:
        return self.profiles[self.phase_at(t_s)[1]]

    def phase_at(self, t_s: float) -> tuple[float, str]:
        """(phase start time, profile name) active at t."""
        start, name = self.transitions[0]
        for at, n in self.transitions:
            if at <= t_s:
                start, name = at, n
            else:
                break
        return start, name

    def phases(self, t_end_s: float) -> list[tuple[float, float, str]]:
        """Phase intervals [(start, end, profile name), ...] covering [0, t_end)."""
        out = []
        for i, (at, name) in enumerate(self.transitions):
            if at >= t_end_s:
                break
            nxt = (
                self.transitions[i + 1][0]
                if i + 1 < len(self.transitions)
                else t_end_s
            )
            out.append((at, min(nxt, t_end_s), name))
        return out

    def transition_times(self) -> list[float]:
        return [t for t, _ in self.transitions]

    def with_profile_loss(self, profile_name: str, loss_prob: float) -> "Scenario":
        """Copy of this scenario with one profile's loss probability replaced."""
        if profile_name not in self.profiles:
            raise ScenarioError(f"unknown profile {profile_name!r}")
        profiles = dict(self.profiles)
        profiles[profile_name] = dataclasses.replace(
            profiles[profile_name], loss_prob=loss_prob
        )
        return dataclasses.replace(self, profiles=profiles)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    def n_adaptive_flows(self) -> int:
        """Measured flow plus distinct adaptive background flow ids."""
        if self.traffic is None:
            return 1
        flow_ids = {
            ev.flow_id
            for pattern in self.traffic.patterns.values()
            for ev in pattern.events
            if ev.adaptive
        }
        return 1 + len(flow_ids)


def _parse_profile(name: str, raw: dict) -> LinkProfile:
    try:
        return LinkProfile(
            rate_bps=float(raw["rate_bps"]),
            one_way_delay_ms=float(raw["one_way_delay_ms"]),
            loss_prob=float(raw.get("loss_prob", 0.0)),
            queue_capacity_bytes=int(raw.get("queue_capacity_bytes", 0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"profile {name!r} missing field {exc}") from exc
    except SimError as exc:
        raise ScenarioError(f"profile {name!r}: {exc}") from exc


def scenario_from_dict(doc: dict, base_dir: Optional[Path] = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    try:
        profiles = {
            str(k): _parse_profile(str(k), v) for k, v in doc["profiles"].items()
        }
        topo_doc = doc["topology"]
        topology = build_dumbbell(
            [str(h) for h in topo_doc["ls_hosts"]],
            [str(h) for h in topo_doc["rs_hosts"]],
        )
        transitions = tuple(
            (float(e["at_time_s"]), str(e["profile"])) for e in doc["transitions"]
        )
    except KeyError as exc:
        raise ScenarioError(f"scenario missing field {exc}") from exc
    except SimError as exc:
        raise ScenarioError(str(exc)) from exc

    traffic = None
    if "traffic" in doc and doc["traffic"]:
        tdoc = doc["traffic"]
        period = float(tdoc.get("period_s", 8.0))
        patterns = {}
        for phase, ref in (tdoc.get("scripts") or {}).items():
            text = str(ref)
            if "\n" not in text:
                path = Path(text)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                try:
                    text = path.read_text()
                except OSError as exc:
                    raise ScenarioError(f"cannot read traffic script {ref!r}: {exc}")
            patterns[str(phase)] = parse_script(text, period_s=period)
        traffic = TrafficScript(patterns=patterns, period_s=period)

    access = (
        _parse_profile("access", doc["access"])
        if "access" in doc
        else DEFAULT_ACCESS_PROFILE
    )
    return Scenario(
        name=str(doc.get("name", "scenario")),
        profiles=profiles,
        topology=topology,
        transitions=transitions,
        traffic=traffic,
        seed=int(doc.get("seed", 0)),
        access_profile=access,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML in {path}: {exc}") from exc
    return scenario_from_dict(doc, base_dir=path.parent)


def residual_rate_segments(scenario: Scenario, start_s: float, end_s: float):
    """Yield (t0, t1, rate_bps - nonadaptive_load_bps) pieces covering [start, end).

    Both the link rate and the scripted load are piecewise constant, with
    breakpoints at transitions and at pattern-event boundaries repeated every
    period, so the decomposition is exact.
    """
    from .traffic import offered_load  # local import to avoid cycle

    if end_s <= start_s:
        return
    for p_start, p_end, profile_name in scenario.phases(end_s):
        seg_start = max(p_start, start_s)
        seg_end = min(p_end, end_s)
        if seg_start >= seg_end:
            continue
        rate = scenario.profiles[profile_name].rate_bps
        pattern = (
            scenario.traffic.pattern_for(profile_name)
            if scenario.traffic is not None
            else None
        )
        if pattern is None or not pattern.events:
            yield seg_start, seg_end, rate
            continue
        period = pattern.period_s
        bounds = pattern.boundaries()
        t = seg_start
        while t < seg_end - 1e-12:
            local = (t - p_start) % period
            nxt_local = next((b for b in bounds if b > local + 1e-12), period)
            t_next = min(t + (nxt_local - local), seg_end)
            load = offered_load(scenario.traffic, scenario, t)
            yield t, t_next, rate - load
            t = t_next


def residual_capacity_integral(
    scenario: Scenario,
    start_s: float,
    end_s: float,
    floor_bps: float = 0.0,
) -> float:
    """Integral of max(rate - nonadaptive background load, floor) over [start, end]."""
    return sum(
        max(residual, floor_bps) * (t1 - t0)
        for t0, t1, residual in residual_rate_segments(scenario, start_s, end_s)
    )
