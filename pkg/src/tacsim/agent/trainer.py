"""Off-policy continuous-control trainer: twin critics, target networks,
delayed deterministic policy updates, gaussian exploration noise."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env import CongestionControlEnv
from ..features import OBS_COLUMNS
from ..sim import substream
from .buffer import ReplayBuffer
from .checkpoint import load_checkpoint, save_checkpoint
from .nets import MLP, Adam, soft_update


class TrainingDiverged(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500_000
    buffer_capacity: int = 250_000
    batch_size: int = 256
    hidden: tuple[int, ...] = (256, 256)
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    noise_sigma: float = 0.1
    policy_delay: int = 2
    warmup_steps: int = 1000
    update_every: int = 1
    log_every: int = 1000
    seed: int = 0
    # exploring starts: draw each training episode's initial window
    # log-uniformly so the buffer covers the whole window range (the
    # multiplicative action walk otherwise rarely leaves its start region)
    explore_init_cwnd: bool = True
    # epsilon-uniform action mixing after warmup: gaussian noise around a
    # saturated policy clips to a half-interval and starves the critic of
    # counter-evidence, so a slice of fully random actions is kept for good
    explore_eps: float = 0.1
    # multi-step returns: the throughput payoff of opening the window only
    # shows up in acknowledgments about one RTT (several decision windows)
    # later, which a one-step bootstrap cannot see past a policy that undoes
    # the action immediately; n_step=1 recovers the plain TD target
    n_step: int = 5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def desk_scale(cls, seed: int = 0) -> "TrainConfig":
        """Laptop-sized preset: same algorithm, smaller nets and batches."""
        return cls(
            total_steps=50_000,
            buffer_capacity=50_000,
            batch_size=64,
            hidden=(64, 64),
            noise_sigma=0.2,
            warmup_steps=1000,
            seed=seed,
        )


class ActorCritic:
    """Actor with tanh head (actions in [-1, 1] by construction) and twin
    state-action critics, each mirrored by a slowly tracking target network."""

    def __init__(self, obs_dim: int, hidden: tuple[int, ...], seed: int,
                 actor_lr: float = 3e-4, critic_lr: float = 3e-4):
        self.obs_dim = obs_dim
        init = substream(seed, "agent/init")
        self.actor = MLP((obs_dim, *hidden, 1), "tanh", init)
        self.critic1 = MLP((obs_dim + 1, *hidden, 1), "linear", init)
        self.critic2 = MLP((obs_dim + 1, *hidden, 1), "linear", init)
        self.target_actor = self.actor.clone()
        self.target_critic1 = self.critic1.clone()
        self.target_critic2 = self.critic2.clone()
        self.actor_opt = Adam(self.actor.params(), actor_lr)
        self.critic1_opt = Adam(self.critic1.params(), critic_lr)
        self.critic2_opt = Adam(self.critic2.params(), critic_lr)

    def act(self, obs_flat: np.ndarray) -> float:
        return float(self.actor(obs_flat)[0])

    def act_noisy(self, obs_flat: np.ndarray, sigma: float,
                  rng: np.random.Generator) -> float:
        action = self.act(obs_flat)
        if sigma > 0:
            action += float(rng.normal(0.0, sigma))
        return float(np.clip(action, -1.0, 1.0))

    def critic_targets(self, next_obs: np.ndarray, rewards: np.ndarray,
                       bootstrap: np.ndarray, discounts: np.ndarray) -> np.ndarray:
        next_actions = self.target_actor(next_obs)
        sa = np.hstack([next_obs, next_actions])
        q_min = np.minimum(self.target_critic1(sa), self.target_critic2(sa))[:, 0]
        return rewards + discounts * bootstrap * q_min

    def update_critics(self, obs, actions, y) -> float:
        sa = np.hstack([obs, actions])
        batch = sa.shape[0]
        loss_total = 0.0
        for critic, opt in ((self.critic1, self.critic1_opt),
                            (self.critic2, self.critic2_opt)):
            q, cache = critic.forward(sa)
            err = q[:, 0] - y
            loss_total += float(np.mean(err ** 2))
            grads, _ = critic.backward(cache, (2.0 / batch) * err[:, None])
            opt.step(grads)
        return loss_total / 2.0

    def update_actor(self, obs) -> float:
        batch = obs.shape[0]
        actions, cache_a = self.actor.forward(obs)
        sa = np.hstack([obs, actions])
        q, cache_q = self.critic1.forward(sa)
        loss = -float(np.mean(q))
        _, grad_sa = self.critic1.backward(cache_q, np.full_like(q, -1.0 / batch))
        grad_action = grad_sa[:, self.obs_dim:]
        grads, _ = self.actor.backward(cache_a, grad_action)
        self.actor_opt.step(grads)
        return loss

    def update_targets(self, tau: float):
        soft_update(self.target_actor, self.actor, tau)
        soft_update(self.target_critic1, self.critic1, tau)
        soft_update(self.target_critic2, self.critic2, tau)

    def networks(self) -> dict[str, MLP]:
        return {
            "actor": self.actor,
            "critic1": self.critic1,
            "critic2": self.critic2,
        }


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    episodes: int
    final_critic_loss: float


def train(env: CongestionControlEnv, config: TrainConfig, out_dir: str | Path) -> TrainResult:
    """Run the training loop and write a checkpoint plus a learning-curve CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agent = ActorCritic(OBS_COLUMNS * env.config.history_len, config.hidden,
                        config.seed, config.actor_lr, config.critic_lr)
    buffer = ReplayBuffer(config.buffer_capacity, agent.obs_dim)
    explore_rng = substream(config.seed, "agent/explore")
    batch_rng = substream(config.seed, "agent/batch")
    episode_rng = substream(config.seed, "agent/episodes")

    log_path = out_dir / "learning_curve.csv"
    checkpoint_path = out_dir / "checkpoint.bin"
    log_file = open(log_path, "w", newline="")
    log_writer = csv.writer(log_file)
    log_writer.writerow(["step", "episode_return", "critic_loss", "actor_loss"])

    def reset_episode() -> np.ndarray:
        obs = env.reset(int(episode_rng.integers(0, 2**31)))
        if config.explore_init_cwnd:
            lo = math.log(env.config.transport.cwnd_min_bytes)
            hi = math.log(env.config.transport.cwnd_cap_bytes)
            env.conn.set_cwnd(int(round(math.exp(explore_rng.uniform(lo, hi)))))
        return obs.ravel()

    obs = reset_episode()
    episode_return = 0.0
    returns_window: list[float] = []
    episodes = 0
    updates = 0
    critic_loss = math.nan
    actor_loss = math.nan
    # open n-step returns: [start_obs, action, reward_sum, age]
    pending: list[list] = []

    def flush_pending(next_obs, terminal, truncated, up_to_age):
        while pending and pending[0][3] >= up_to_age:
            p_obs, p_action, p_reward, age = pending.pop(0)
            buffer.add(p_obs, p_action, p_reward, next_obs,
                       terminal=terminal, truncated=truncated,
                       discount=config.gamma ** age)

    try:
        for step in range(1, config.total_steps + 1):
            if step <= config.warmup_steps:
                action = float(explore_rng.uniform(-1.0, 1.0))
            elif (config.explore_eps > 0
                    and explore_rng.random() < config.explore_eps):
                action = float(explore_rng.uniform(-1.0, 1.0))
            else:
                action = agent.act_noisy(obs, config.noise_sigma, explore_rng)
            result = env.step(action)
            next_obs = result.observation.ravel()
            pending.append([obs, action, 0.0, 0])
            for entry in pending:
                entry[2] += (config.gamma ** entry[3]) * result.reward
                entry[3] += 1
            flush_pending(next_obs, result.terminal, result.truncated,
                          up_to_age=config.n_step)
            episode_return += result.reward
            if result.terminal or result.truncated:
                flush_pending(next_obs, result.terminal, result.truncated,
                              up_to_age=1)
                returns_window.append(episode_return)
                episode_return = 0.0
                episodes += 1
                obs = reset_episode()
            else:
                obs = next_obs

            if step > config.warmup_steps and step % config.update_every == 0:
                batch = buffer.sample(config.batch_size, batch_rng)
                y = agent.critic_targets(batch["next_obs"], batch["rewards"],
                                         batch["bootstrap"], batch["discounts"])
                critic_loss = agent.update_critics(batch["obs"], batch["actions"], y)
                updates += 1
                if updates % config.policy_delay == 0:
                    actor_loss = agent.update_actor(batch["obs"])
                    agent.update_targets(config.tau)
                if not (math.isfinite(critic_loss)
                        and (math.isnan(actor_loss) or math.isfinite(actor_loss))):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step}: "
                        f"critic={critic_loss} actor={actor_loss}"
                    )

            if step % config.log_every == 0 or step == config.total_steps:
                mean_return = (
                    float(np.mean(returns_window)) if returns_window else math.nan
                )
                returns_window = []
                log_writer.writerow([
                    step, repr(mean_return), repr(critic_loss), repr(actor_loss),
                ])
                log_file.flush()
    finally:
        log_file.close()

    save_checkpoint(checkpoint_path, agent.networks(), env.normalizer.state())
    return TrainResult(
        checkpoint_path=checkpoint_path,
        log_path=log_path,
        episodes=episodes,
        final_critic_loss=critic_loss,
    )


@dataclass
class PolicyBundle:
    """Greedy policy restored from a checkpoint, with its frozen normalizer."""

    actor: MLP
    normalizer_state: dict

    @classmethod
    def load(cls, path: str | Path) -> "PolicyBundle":
        networks, norm_state = load_checkpoint(path)
        if "actor" not in networks:
            from .checkpoint import CheckpointError

            raise CheckpointError(f"{path}: checkpoint has no actor network")
        return cls(actor=networks["actor"], normalizer_state=norm_state)

    def act(self, observation: np.ndarray) -> float:
        return float(self.actor(np.asarray(observation).ravel())[0])
