"""RL environment: 100 ms step clock, stacked observations, reward.

Each step applies a congestion-window gain, advances the simulator exactly
one decision window, turns the transport's window statistics into a
normalized 10 x 98 observation, and computes the strictly negative
retransmission-penalized reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import OBS_COLUMNS, MovingNormalizer, WindowFeaturizer
from .scenario import (
    RECEIVER_HOST,
    SENDER_HOST,
    TRAFFIC_SINK_HOST,
    TRAFFIC_SRC_HOST,
    Scenario,
    residual_capacity_integral,
)
from .sim import Packet, Simulator
from .traffic import generate_events
from .transport import KB, Receiver, Sender, TransportConfig

TARGET_RATE_FLOOR_BPS = 1000.0  # 1 kb/s floor inside the target integral


class EnvError(Exception):
    pass


@dataclass(frozen=True)
class Action:
    """Congestion-window percentage gain in [-1, 1]."""

    gain: float

    def __post_init__(self):
        if not -1.0 <= self.gain <= 1.0:
            raise EnvError(f"action gain {self.gain} outside [-1, 1]")


@dataclass(frozen=True)
class RewardInputs:
    target_kb: float
    acked_cumulative_kb: float
    retransmissions: int
    loss_c: float

    def __post_init__(self):
        if self.target_kb <= 0:
            raise EnvError("target_kb must be > 0")
        if self.acked_cumulative_kb < 0 or self.retransmissions < 0:
            raise EnvError("acked and retransmissions must be >= 0")
        if not 0.0 <= self.loss_c <= 1.0:
            raise EnvError("loss_c must be in [0, 1]")


def compute_reward(inputs: RewardInputs) -> float:
    """Strictly negative reward: progress shrinks the penalty, retransmissions
    inflate it in proportion to how little of the loss was environmental."""
    penalty = inputs.target_kb * (
        1.0 + inputs.retransmissions * (1.0 - inputs.loss_c)
    )
    return -penalty / (inputs.target_kb + inputs.acked_cumulative_kb)


def compute_target(scenario: Scenario, t_elapsed_s: float, start_s: float = 0.0) -> float:
    """Kilobytes deliverable over [start, start + elapsed] at the residual rate.

    Integrates max(link rate - nonadaptive background load, 1 kb/s) exactly
    over the piecewise-constant segments.
    """
    if t_elapsed_s < 0:
        raise EnvError("t_elapsed_s must be >= 0")
    bits = residual_capacity_integral(
        scenario, start_s, start_s + t_elapsed_s, floor_bps=TARGET_RATE_FLOOR_BPS
    )
    return bits / 8.0 / KB


def apply_action(conn: Sender, action: Action | float) -> int:
    """Scale the congestion window by (1 + gain), with transport clamps."""
    gain = action.gain if isinstance(action, Action) else Action(float(action)).gain
    return conn.set_cwnd(int(round(conn.cwnd_bytes * (1.0 + gain))))


@dataclass
class EnvConfig:
    window_s: float = 0.1
    history_len: int = 10
    ema_alpha: float = 0.3
    normalizer_decay: float = 0.999
    normalizer_eps: float = 1e-8
    steps_per_episode: int = 200      # training truncation
    eval_step_cap: int = 3000         # safety cap for evaluation episodes
    payload_bytes: int = 600_000      # evaluation transfer size
    backlog_chunk_bytes: int = 1_000_000   # training bulk-source top-up
    backlog_low_bytes: int = 500_000
    handshake_timeout_s: float = 60.0
    external_cwnd: bool = False       # ignore actions; a controller drives cwnd
    record_trace: bool = False        # keep the simulator's event trace
    transport: TransportConfig = field(default_factory=TransportConfig)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    truncated: bool
    terminal: bool
    info: dict


class BulkAdaptiveFlow:
    """A long-lived background transfer driven by an attached controller.

    Used for adaptive ("TCP-like") scripted flows: the flow starts at its
    phase offset, keeps an effectively unlimited backlog while active, and
    stops sending at the end of its phase.
    """

    def __init__(self, sim: Simulator, flow_id: str, start_s: float, stop_s: float,
                 config: TransportConfig):
        from .baselines import CubicController  # avoid import cycle

        self.sender = Sender(sim, flow_id, TRAFFIC_SRC_HOST, TRAFFIC_SINK_HOST, config)
        self.receiver = Receiver(sim, flow_id, TRAFFIC_SINK_HOST, TRAFFIC_SRC_HOST, config)
        self.controller = CubicController(self.sender)
        self.stop_s = stop_s
        self.active = True
        sim.schedule_at(start_s, self._start, ())
        sim.schedule_at(stop_s, self._stop, ())
        self.sim = sim

    def _start(self):
        self.sender.connect()
        self._top_up()

    def _top_up(self):
        if not self.active:
            return
        if self.sender.send_queue_bytes < 100_000:
            self.sender.send_payload(500_000)
        self.sim.schedule_at(self.sim.now_s + 0.5, self._top_up, ())

    def _stop(self):
        self.active = False


class CongestionControlEnv:
    """One environment owns one simulator; step/reset are strictly sequential."""

    def __init__(
        self,
        scenario: Scenario,
        mode: str = "training",
        config: Optional[EnvConfig] = None,
        normalizer: Optional[MovingNormalizer] = None,
    ):
        if mode not in ("training", "evaluation"):
            raise EnvError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.config = config or EnvConfig()
        self.normalizer = normalizer or MovingNormalizer(
            OBS_COLUMNS, self.config.normalizer_decay, self.config.normalizer_eps
        )
        if mode == "evaluation":
            self.normalizer.freeze()
        self.featurizer = WindowFeaturizer(self.config.ema_alpha)
        self.sim: Optional[Simulator] = None
        self.conn: Optional[Sender] = None
        self.receiver: Optional[Receiver] = None
        self.history: Optional[np.ndarray] = None
        self.step_index = 0
        self.done = False
        self._was_reset = False
        self._established_at = 0.0
        self._background: list[BulkAdaptiveFlow] = []
        self.last_episode_seed: Optional[int] = None
        # Called as connection_hook(conn, sim) after each reset builds the
        # transport, before the handshake; used to attach cwnd controllers.
        self.connection_hook = None

    # -- lifecycle

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        cfg = self.config
        seed = self.scenario.seed if seed is None else int(seed)
        self.last_episode_seed = seed
        self.sim = Simulator(seed=seed, record_trace=cfg.record_trace)
        self.sim.configure_dumbbell(
            self.scenario.topology,
            self.scenario.schedule(),
            self.scenario.access_profile,
        )
        self._start_background_traffic(seed)
        self.conn = Sender(self.sim, "flow0", SENDER_HOST, RECEIVER_HOST, cfg.transport)
        self.receiver = Receiver(
            self.sim, "flow0", RECEIVER_HOST, SENDER_HOST, cfg.transport
        )
        self.conn.established_listeners.append(self._on_established)
        if self.connection_hook is not None:
            self.connection_hook(self.conn, self.sim)
        self.featurizer.reset()
        self.history = np.zeros((cfg.history_len, OBS_COLUMNS), dtype=np.float64)
        self.step_index = 0
        self.done = False
        self._was_reset = True

        self.conn.connect()
        guard = cfg.handshake_timeout_s
        while not self.conn.established and self.sim.now_s < guard:
            self.sim.run_until(self.sim.now_s + 0.05)
        if not self.conn.established:
            raise EnvError("handshake did not complete; scenario unusable")
        self._established_at = self.conn.established_at
        # Collect the first decision window so reset returns a real state.
        self.sim.run_until(self._window_boundary(1))
        self._ingest_window(self._window_boundary(1))
        return self.history.copy()

    def _on_established(self, now_s: float):
        cfg = self.config
        if self.mode == "evaluation":
            self.conn.send_payload(cfg.payload_bytes)
            self.conn.completion_target_bytes = cfg.payload_bytes
        else:
            self.conn.send_payload(cfg.backlog_chunk_bytes)
        self.conn.begin_stats(now_s)

    def _start_background_traffic(self, seed: int):
        self._background = []
        script = self.scenario.traffic
        if script is None:
            return
        horizon = (
            max(self.config.steps_per_episode, self.config.eval_step_cap)
            * self.config.window_s
            + self.config.handshake_timeout_s
        )
        flow_seqs: dict[str, int] = {}
        for inj in generate_events(script, self.scenario, seed, horizon):
            seq = flow_seqs.get(inj.flow_id, 0)
            flow_seqs[inj.flow_id] = seq + 1
            self.sim.schedule_at(
                inj.time_s, self._inject_background, (inj.flow_id, seq, inj.size_bytes)
            )
        for p_start, p_end, profile_name in self.scenario.phases(horizon):
            for ev in script.adaptive_events(profile_name):
                self._background.append(BulkAdaptiveFlow(
                    self.sim, f"bg:{ev.flow_id}:{p_start}",
                    p_start + ev.start_s, p_end, self.config.transport,
                ))

    def _inject_background(self, flow_id: str, seq: int, size_bytes: int):
        self.sim.send(
            TRAFFIC_SRC_HOST, TRAFFIC_SINK_HOST,
            Packet(flow_id, seq, size_bytes, "data"),
        )

    # -- stepping

    def _window_boundary(self, k: int) -> float:
        return self._established_at + k * self.config.window_s

    def _ingest_window(self, boundary_s: float):
        snapshot = self.conn.collect_window_stats(boundary_s, self.config.window_s)
        raw = self.featurizer.row(snapshot)
        self.normalizer.update(raw)
        normalized = self.normalizer.normalize(raw)
        self.history[:-1] = self.history[1:]
        self.history[-1] = normalized
        return snapshot, raw

    def step(self, action: Action | float) -> StepResult:
        if not self._was_reset:
            raise EnvError("step before reset")
        if self.done:
            raise EnvError("step after episode end; call reset")
        cfg = self.config
        if not cfg.external_cwnd:
            apply_action(self.conn, action)
        if self.mode == "training" and self.conn.send_queue_bytes < cfg.backlog_low_bytes:
            self.conn.send_payload(cfg.backlog_chunk_bytes)

        self.step_index += 1
        boundary = self._window_boundary(self.step_index + 1)
        self.sim.run_until(boundary)
        snapshot, raw = self._ingest_window(boundary)

        elapsed = boundary - self._established_at
        target_kb = max(
            compute_target(self.scenario, elapsed, start_s=self._established_at),
            cfg.transport.segment_bytes / KB,
        )
        loss_c = self.sim.bottleneck_profile().loss_prob
        reward = compute_reward(RewardInputs(
            target_kb=target_kb,
            acked_cumulative_kb=self.conn.cumulative_acked_kb,
            retransmissions=snapshot.retransmissions,
            loss_c=loss_c,
        ))

        terminal = self.mode == "evaluation" and self.conn.complete_at is not None
        if self.mode == "training":
            truncated = self.step_index >= cfg.steps_per_episode
        else:
            truncated = not terminal and self.step_index >= cfg.eval_step_cap
        self.done = terminal or truncated

        info = {
            "cwnd_bytes": self.conn.cwnd_bytes,
            "srtt_ms": self.conn.srtt_ms if self.conn.srtt_ms is not None else 0.0,
            "retransmissions_window": snapshot.retransmissions,
            "sim_time_s": self.sim.now_s,
            "target_kb": target_kb,
            "acked_cumulative_kb": self.conn.cumulative_acked_kb,
            "loss_c": loss_c,
            "bytes_in_flight": self.conn.bytes_in_flight,
            "raw_stats": raw.tolist(),
            "completion_time_s": self.conn.complete_at,
        }
        return StepResult(
            observation=self.history.copy(),
            reward=reward,
            truncated=truncated,
            terminal=terminal,
            info=info,
        )
