"""Experience replay: fixed-capacity ring buffer over numpy storage.

Safe for one appender and one sampler running concurrently (a single lock
guards index arithmetic; array slots are written before the size is
published).  Every push gets a monotonically increasing sequence tag so
concurrency tests can audit that nothing is lost or duplicated.
"""

from __future__ import annotations

import threading
from typing import Dict, Optional

import numpy as np


class ReplayBuffer:
    """Uniform-sampling ring buffer for transitions.

    ``action_dim=0`` stores integer (discrete) actions; otherwise actions
    are float vectors of that length.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        if action_dim == 0:
            self.actions = np.zeros(capacity, dtype=np.int64)
        else:
            self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.seq = np.full(capacity, -1, dtype=np.int64)
        self._lock = threading.Lock()
        self._size = 0
        self._index = 0
        self.pushed = 0

    def __len__(self) -> int:
        with self._lock:
            return self._size

    def push(self, obs, action, reward: float, next_obs, done: bool) -> int:
        with self._lock:
            i = self._index
            tag = self.pushed
            self.obs[i] = obs
            self.next_obs[i] = next_obs
            self.actions[i] = action
            self.rewards[i] = reward
            self.dones[i] = 1.0 if done else 0.0
            self.seq[i] = tag
            self._index = (i + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)
            self.pushed += 1
            return tag

    def sample(self, batch_size: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        with self._lock:
            size = self._size
            if size < batch_size:
                raise ValueError(f"buffer holds {size} < batch {batch_size}")
            idx = rng.integers(0, size, size=batch_size)
            return {
                "obs": self.obs[idx].copy(),
                "actions": self.actions[idx].copy(),
                "rewards": self.rewards[idx].copy(),
                "next_obs": self.next_obs[idx].copy(),
                "dones": self.dones[idx].copy(),
                "seq": self.seq[idx].copy(),
            }

    def snapshot_tags(self) -> np.ndarray:
        """Sequence tags currently resident, for buffer audits."""
        with self._lock:
            return self.seq[: self._size].copy()
