"""Evaluation metrics: link-transition RTT impact, completion time, aggregation.

The transition-impact metric is the natural log of the mean, across the links
traversed during a communication, of each link's maximum observed RTT over its
nominal RTT; 0 denotes flawless queue management.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .scenario import Scenario


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class RtiInputs:
    per_link: tuple[tuple[float, float], ...]  # (rtt_max_ms, rtt_nom_ms) per link
    omitted_links: tuple[int, ...] = ()        # schedule entries with no samples

    def __post_init__(self):
        if len(self.per_link) < 1:
            raise MetricsError("at least one link measurement required")
        for rtt_max, rtt_nom in self.per_link:
            if rtt_nom <= 0:
                raise MetricsError(f"nominal rtt must be > 0, got {rtt_nom}")


def compute_rti(inputs: RtiInputs) -> float:
    """ln of the mean max/nominal RTT ratio across links."""
    ratios = [rtt_max / rtt_nom for rtt_max, rtt_nom in inputs.per_link]
    return math.log(sum(ratios) / len(ratios))


def load_rtt_samples(trace_path: Path) -> list[tuple[float, float]]:
    """RTT samples (time_s, rtt_ms) from a transport event-log CSV."""
    samples = []
    with open(trace_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"time_s", "event_kind", "value"} - set(reader.fieldnames or ())
        if missing:
            raise MetricsError(f"trace file missing columns: {sorted(missing)}")
        for row in reader:
            if row["event_kind"] == "rtt_sample":
                samples.append((float(row["time_s"]), float(row["value"])))
    return samples


def split_rtt_by_link(
    rtt_samples: Iterable[tuple[float, float]],
    scenario: Scenario,
) -> RtiInputs:
    """Attribute (time_s, rtt_ms) samples to the link active at measurement end.

    A sample completing exactly at a transition belongs to the new link.
    Links without samples are omitted (m shrinks) and flagged in the result.
    """
    times = scenario.transition_times()
    maxima: dict[int, float] = {}
    for t_s, rtt_ms in rtt_samples:
        idx = 0
        for i, at in enumerate(times):
            if at <= t_s:
                idx = i
        maxima[idx] = max(maxima.get(idx, -math.inf), rtt_ms)
    if not maxima:
        raise MetricsError("no RTT samples in trace")
    per_link = []
    omitted = []
    for i, (_, profile_name) in enumerate(scenario.transitions):
        if i in maxima:
            nominal = scenario.profiles[profile_name].nominal_rtt_ms
            per_link.append((maxima[i], nominal))
        else:
            omitted.append(i)
    return RtiInputs(per_link=tuple(per_link), omitted_links=tuple(omitted))


@dataclass(frozen=True)
class EpisodeReport:
    policy: str
    loss_c: float
    seed: int
    completion_time_s: float
    retransmissions: int
    rti: float

    def __post_init__(self):
        if self.completion_time_s <= 0 and math.isfinite(self.completion_time_s):
            raise MetricsError("completion_time_s must be > 0")


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    loss_c: float
    episodes: int
    time_mean_s: float
    time_std_s: float
    retransmissions_mean: float
    retransmissions_std: float
    rti_mean: float
    rti_std: float


def aggregate(reports: list[EpisodeReport]) -> list[SummaryRow]:
    """Mean/std of time, retransmissions, and RTI grouped by (policy, loss)."""
    if not reports:
        raise MetricsError("cannot aggregate an empty report list")
    groups: dict[tuple[str, float], list[EpisodeReport]] = {}
    for r in reports:
        groups.setdefault((r.policy, r.loss_c), []).append(r)
    rows = []
    for (policy, loss_c), items in sorted(groups.items()):
        times = np.array([r.completion_time_s for r in items])
        retx = np.array([r.retransmissions for r in items], dtype=np.float64)
        rtis = np.array([r.rti for r in items])
        rows.append(SummaryRow(
            policy=policy,
            loss_c=loss_c,
            episodes=len(items),
            time_mean_s=float(times.mean()),
            time_std_s=float(times.std()),
            retransmissions_mean=float(retx.mean()),
            retransmissions_std=float(retx.std()),
            rti_mean=float(rtis.mean()),
            rti_std=float(rtis.std()),
        ))
    return rows


EPISODE_FIELDS = (
    "policy", "loss_c", "seed", "completion_time_s", "retransmissions", "rti",
)


def write_episode_csv(reports: list[EpisodeReport], path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_FIELDS)
        for r in sorted(reports, key=lambda r: (r.policy, r.loss_c, r.seed)):
            writer.writerow([
                r.policy, repr(r.loss_c), r.seed,
                repr(r.completion_time_s), r.retransmissions, repr(r.rti),
            ])


def read_episode_csv(path: Path) -> list[EpisodeReport]:
    reports = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EPISODE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise MetricsError(f"episode CSV missing columns: {sorted(missing)}")
        for row in reader:
            reports.append(EpisodeReport(
                policy=row["policy"],
                loss_c=float(row["loss_c"]),
                seed=int(row["seed"]),
                completion_time_s=float(row["completion_time_s"]),
                retransmissions=int(row["retransmissions"]),
                rti=float(row["rti"]),
            ))
    return reports


def write_summary(rows: list[SummaryRow], csv_path: Path, json_path: Optional[Path] = None):
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "policy", "loss_c", "episodes",
            "time_mean_s", "time_std_s",
            "retransmissions_mean", "retransmissions_std",
            "rti_mean", "rti_std",
        ])
        for r in rows:
            writer.writerow([
                r.policy, repr(r.loss_c), r.episodes,
                repr(r.time_mean_s), repr(r.time_std_s),
                repr(r.retransmissions_mean), repr(r.retransmissions_std),
                repr(r.rti_mean), repr(r.rti_std),
            ])
    if json_path is not None:
        doc = [r.__dict__ for r in rows]
        json_path.write_text(json.dumps(doc, indent=2) + "\n")
