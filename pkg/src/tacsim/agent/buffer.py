"""Uniform-sampling ring replay buffer."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Fixed-capacity ring; truncated transitions keep bootstrapping.

    Only `terminal` kills the bootstrap: episode truncation is a training
    artifact of the time-unlimited task, so the target value still uses the
    critic's estimate of the successor state.
    """

    def __init__(self, capacity: int, obs_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, 1), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.bootstrap = np.zeros(capacity, dtype=np.float32)
        # discount applied to the bootstrap term; gamma**m for an m-step return
        self.discounts = np.zeros(capacity, dtype=np.float32)
        self.size = 0
        self._ptr = 0

    def add(self, obs, action, reward, next_obs, terminal: bool, truncated: bool,
            discount: float = 0.99):
        i = self._ptr
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i, 0] = action
        self.rewards[i] = reward
        self.bootstrap[i] = 0.0 if terminal else 1.0
        self.discounts[i] = discount
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx].astype(np.float64),
            "actions": self.actions[idx].astype(np.float64),
            "rewards": self.rewards[idx].astype(np.float64),
            "next_obs": self.next_obs[idx].astype(np.float64),
            "bootstrap": self.bootstrap[idx].astype(np.float64),
            "discounts": self.discounts[idx].astype(np.float64),
        }
