"""Batch evaluation: run file-transfer episodes per (policy, loss, seed) and
aggregate completion time, retransmissions, and the transition-impact metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .baselines import CubicController, fixed_cwnd_policy, ideal_fair_time, random_policy
from .env import CongestionControlEnv, EnvConfig
from .features import MovingNormalizer
from .metrics import (
    EpisodeReport,
    aggregate,
    compute_rti,
    split_rtt_by_link,
    write_episode_csv,
    write_summary,
)
from .presets import get_scenario
from .scenario import Scenario
from .sim import substream
from .agent.trainer import PolicyBundle

ADAPTIVE_POLICIES = ("cubic", "marlin", "ideal")
NONADAPTIVE_POLICIES = ("fixed", "random")


class HarnessError(Exception):
    pass


@dataclass(frozen=True)
class EvalPlan:
    scenario: str = "satcom-uhf"
    policies: tuple[str, ...] = ("marlin", "cubic", "fixed", "random", "ideal")
    payload_bytes: int = 600_000
    batch_size: int = 100
    loss_levels: tuple[float, ...] = (0.0, 0.01, 0.02, 0.03)
    loss_profile: str = "uhf"
    base_seed: int = 1000
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.payload_bytes <= 0:
            raise HarnessError("payload_bytes must be > 0")
        if self.batch_size <= 0 or not self.loss_levels:
            raise HarnessError("batch_size and loss_levels must be non-empty")

    @property
    def repetitions(self) -> int:
        return self.batch_size * len(self.loss_levels)

    def levels_for(self, policy: str) -> tuple[float, ...]:
        """Non-adaptive references run only at the harshest loss level."""
        if policy in NONADAPTIVE_POLICIES:
            return (max(self.loss_levels),)
        return self.loss_levels


def load_plan(path: str | Path) -> EvalPlan:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise HarnessError("evaluation plan must be a mapping")
    known = {
        "scenario", "policies", "payload_bytes", "batch_size",
        "loss_levels", "loss_profile", "base_seed", "checkpoint",
        "repetitions",
    }
    unknown = set(doc) - known
    if unknown:
        raise HarnessError(f"unknown plan fields: {sorted(unknown)}")
    reps = doc.pop("repetitions", None)
    plan = EvalPlan(
        scenario=str(doc.get("scenario", "satcom-uhf")),
        policies=tuple(doc.get("policies", ("marlin", "cubic", "fixed", "random", "ideal"))),
        payload_bytes=int(doc.get("payload_bytes", 600_000)),
        batch_size=int(doc.get("batch_size", 100)),
        loss_levels=tuple(float(x) for x in doc.get("loss_levels", (0.0, 0.01, 0.02, 0.03))),
        loss_profile=str(doc.get("loss_profile", "uhf")),
        base_seed=int(doc.get("base_seed", 1000)),
        checkpoint=doc.get("checkpoint"),
    )
    if reps is not None and int(reps) != plan.repetitions:
        raise HarnessError(
            f"repetitions {reps} != batch_size x loss levels = {plan.repetitions}"
        )
    return plan


def run_episode(
    scenario: Scenario,
    policy: str,
    seed: int,
    payload_bytes: int,
    loss_c: float,
    bundle: Optional[PolicyBundle] = None,
    env_config: Optional[EnvConfig] = None,
) -> EpisodeReport:
    """One evaluation transfer for one policy; returns its report row."""
    if policy == "ideal":
        t = ideal_fair_time(scenario, payload_bytes)
        return EpisodeReport(policy, loss_c, seed, t, 0, 0.0)

    cfg = env_config or EnvConfig()
    cfg.payload_bytes = payload_bytes
    cfg.external_cwnd = policy in ("cubic", "fixed")

    normalizer = None
    if policy == "marlin":
        if bundle is None:
            raise HarnessError("marlin policy needs a checkpoint")
        normalizer = MovingNormalizer.from_state(bundle.normalizer_state)
    env = CongestionControlEnv(scenario, "evaluation", cfg, normalizer)

    if policy == "cubic":
        env.connection_hook = lambda conn, sim: CubicController(conn)
    elif policy == "fixed":
        def hook(conn, sim):
            conn.set_cwnd(fixed_cwnd_policy(scenario, 0.0))
            sim.on_transition(lambda idx, profile: conn.set_cwnd(
                int(round(profile.rate_bps / 8.0 * profile.nominal_rtt_ms / 1000.0))
            ))
        env.connection_hook = hook

    rng = substream(seed, "policy/random")
    obs = env.reset(seed)
    while True:
        if policy == "marlin":
            action = max(-1.0, min(1.0, bundle.act(obs)))
        elif policy == "random":
            action = random_policy(rng)
        else:
            action = 0.0  # cwnd driven by the attached controller
        result = env.step(action)
        obs = result.observation
        if result.terminal or result.truncated:
            break

    completion = env.conn.complete_at if env.conn.complete_at is not None else math.inf
    rti = compute_rti(split_rtt_by_link(env.conn.rtt_samples, scenario))
    return EpisodeReport(
        policy=policy,
        loss_c=loss_c,
        seed=seed,
        completion_time_s=completion,
        retransmissions=env.conn.total_retransmissions,
        rti=rti,
    )


def run_plan(
    plan: EvalPlan,
    out_dir: str | Path,
    checkpoint: Optional[str | Path] = None,
    env_config: Optional[EnvConfig] = None,
) -> list[EpisodeReport]:
    """Run the full evaluation sweep and write episode + summary files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = get_scenario(plan.scenario)
    checkpoint = checkpoint or plan.checkpoint
    bundle = None
    if "marlin" in plan.policies:
        if checkpoint is None:
            raise HarnessError("plan includes marlin but no checkpoint was given")
        bundle = PolicyBundle.load(checkpoint)

    reports = []
    for policy in plan.policies:
        for level_idx, loss in enumerate(sorted(plan.levels_for(policy))):
            scn = (
                base.with_profile_loss(plan.loss_profile, loss)
                if plan.loss_profile in base.profiles
                else base
            )
            for b in range(plan.batch_size):
                seed = plan.base_seed + level_idx * plan.batch_size + b
                reports.append(run_episode(
                    scn, policy, seed, plan.payload_bytes, loss, bundle, env_config
                ))
    reports.sort(key=lambda r: (r.policy, r.loss_c, r.seed))
    write_episode_csv(reports, out_dir / "episodes.csv")
    write_summary(
        aggregate(reports), out_dir / "summary.csv", out_dir / "summary.json"
    )
    return reports
