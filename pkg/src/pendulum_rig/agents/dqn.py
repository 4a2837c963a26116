"""Deep Q-learning on the discrete action set.

Vanilla DQN: epsilon-greedy behaviour policy with a linear schedule, a
replay batch per update, Huber loss against a periodically hard-synced
target network, Adam on a two-hidden-layer rectifier net.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from ..config import TrainSettings
from .nets import MLP, Adam, check_finite, hard_update, huber


class DQNAgent:
    def __init__(self, obs_dim: int, n_actions: int, cfg: TrainSettings, seed: int = 0):
        self.cfg = cfg
        self.n_actions = n_actions
        self.rng = np.random.default_rng(seed)
        sizes = [obs_dim, cfg.hidden, cfg.hidden, n_actions]
        self.q = MLP(sizes, self.rng)
        self.q_target = self.q.clone()
        self.opt = Adam(self.q.params(), lr=cfg.lr)
        self.updates = 0

    # -- behaviour -------------------------------------------------------

    def epsilon(self, env_step: int) -> float:
        cfg = self.cfg
        if env_step >= cfg.eps_decay_steps:
            return cfg.eps_end
        frac = env_step / cfg.eps_decay_steps
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def act(self, obs: np.ndarray, env_step: int = 0, greedy: bool = False) -> int:
        if not greedy and self.rng.random() < self.epsilon(env_step):
            return int(self.rng.integers(0, self.n_actions))
        q = self.q.forward(obs)[0]
        return int(np.argmax(q))

    # -- learning --------------------------------------------------------

    def update(self, batch: Dict[str, np.ndarray]) -> float:
        cfg = self.cfg
        states = batch["obs"]
        actions = batch["actions"].astype(np.int64)
        q_all, cache = self.q.forward_cache(states)
        rows = np.arange(len(actions))
        q_sa = q_all[rows, actions]

        q_next = self.q_target.forward(batch["next_obs"]).max(axis=1)
        targets = batch["rewards"] + cfg.gamma * (1.0 - batch["dones"]) * q_next
        delta = q_sa - targets
        loss, ddelta = huber(delta)
        check_finite(loss, "dqn_update", updates=self.updates,
                     q_max=float(np.max(np.abs(q_all))))

        dy = np.zeros_like(q_all)
        dy[rows, actions] = ddelta
        grads, _ = self.q.backward(cache, dy)
        self.opt.step(self.q.params(), grads)
        self.updates += 1
        if self.updates % cfg.target_sync_steps == 0:
            hard_update(self.q_target, self.q)
        return loss

    # -- parameter exchange ----------------------------------------------

    def policy_params(self) -> List[np.ndarray]:
        return self.q.copy_params()

    def load_policy_params(self, params: List[np.ndarray]) -> None:
        self.q.set_params(params)

    def nets(self) -> Dict[str, MLP]:
        return {"q": self.q}

    def load_nets(self, nets: Dict[str, MLP]) -> None:
        self.q.set_params(nets["q"].params())
        hard_update(self.q_target, self.q)
