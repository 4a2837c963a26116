"""Twin-delayed deterministic policy gradient for the continuous mode.

The standard recipe: two critics trained on the minimum of their targets
with clipped noise on the target policy, an actor updated every
``policy_delay`` critic updates by ascending the first critic, and Polyak
averaging on all three target networks.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from ..config import TrainSettings
from .nets import MLP, Adam, check_finite, soft_update


class TD3Agent:
    def __init__(self, obs_dim: int, cfg: TrainSettings, seed: int = 0):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.rng = np.random.default_rng(seed)
        h = cfg.hidden
        self.actor = MLP([obs_dim, h, h, 1], self.rng, out_tanh=True)
        self.critic1 = MLP([obs_dim + 1, h, h, 1], self.rng)
        self.critic2 = MLP([obs_dim + 1, h, h, 1], self.rng)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.actor_opt = Adam(self.actor.params(), lr=cfg.lr)
        self.critic1_opt = Adam(self.critic1.params(), lr=cfg.lr)
        self.critic2_opt = Adam(self.critic2.params(), lr=cfg.lr)
        self.updates = 0

    # -- behaviour -------------------------------------------------------

    def act(self, obs: np.ndarray, greedy: bool = False) -> float:
        a = float(self.actor.forward(obs)[0, 0])
        if not greedy and self.cfg.explore_noise > 0:
            a += float(self.rng.normal(0.0, self.cfg.explore_noise))
        return float(np.clip(a, -1.0, 1.0))

    # -- learning --------------------------------------------------------

    def update(self, batch: Dict[str, np.ndarray]) -> Dict[str, Optional[float]]:
        cfg = self.cfg
        states = batch["obs"]
        actions = np.atleast_2d(batch["actions"])
        if actions.shape[0] == 1 and len(states) > 1:
            actions = actions.T
        next_states = batch["next_obs"]
        batch_n = len(states)

        noise = np.clip(
            self.rng.normal(0.0, cfg.target_noise, size=(batch_n, 1)),
            -cfg.noise_clip, cfg.noise_clip,
        )
        next_actions = np.clip(self.actor_target.forward(next_states) + noise, -1.0, 1.0)
        next_sa = np.concatenate([next_states, next_actions], axis=1)
        q_next = np.minimum(
            self.critic1_target.forward(next_sa), self.critic2_target.forward(next_sa)
        )[:, 0]
        targets = batch["rewards"] + cfg.gamma * (1.0 - batch["dones"]) * q_next

        sa = np.concatenate([states, actions], axis=1)
        critic_loss = 0.0
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = critic.forward_cache(sa)
            delta = q[:, 0] - targets
            critic_loss += float(np.mean(delta * delta))
            dy = (2.0 * delta / batch_n)[:, None]
            grads, _ = critic.backward(cache, dy)
            opt.step(critic.params(), grads)
        check_finite(critic_loss, "td3_critic_update", updates=self.updates)

        self.updates += 1
        actor_loss: Optional[float] = None
        if self.updates % cfg.policy_delay == 0:
            policy_actions, actor_cache = self.actor.forward_cache(states)
            sa_pi = np.concatenate([states, policy_actions], axis=1)
            q_pi, critic_cache = self.critic1.forward_cache(sa_pi)
            actor_loss = float(-np.mean(q_pi))
            check_finite(actor_loss, "td3_actor_update", updates=self.updates)
            # dLoss/dQ = -1/B; push through the critic to get dLoss/daction,
            # then through the actor.  Critic parameters are left untouched.
            dq = np.full_like(q_pi, -1.0 / batch_n)
            _, d_sa = self.critic1.backward(critic_cache, dq)
            d_actions = d_sa[:, self.obs_dim:]
            actor_grads, _ = self.actor.backward(actor_cache, d_actions)
            self.actor_opt.step(self.actor.params(), actor_grads)
            soft_update(self.actor_target, self.actor, cfg.tau)
            soft_update(self.critic1_target, self.critic1, cfg.tau)
            soft_update(self.critic2_target, self.critic2, cfg.tau)
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}

    # -- parameter exchange ----------------------------------------------

    def policy_params(self) -> List[np.ndarray]:
        return self.actor.copy_params()

    def load_policy_params(self, params: List[np.ndarray]) -> None:
        self.actor.set_params(params)

    def nets(self) -> Dict[str, MLP]:
        return {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2}

    def load_nets(self, nets: Dict[str, MLP]) -> None:
        self.actor.set_params(nets["actor"].params())
        if "critic1" in nets:
            self.critic1.set_params(nets["critic1"].params())
            self.critic2.set_params(nets["critic2"].params())
        for target, source in (
            (self.actor_target, self.actor),
            (self.critic1_target, self.critic1),
            (self.critic2_target, self.critic2),
        ):
            target.set_params(source.params())
