"""Training loops, learning curves, evaluation, and run manifests.

Two execution modes share all learning code:

* synchronous (default): one task alternates environment steps and
  gradient updates at a fixed 1:1 ratio — fully deterministic for a
  given seed, used by tests and reproducibility checks.
* asynchronous: the environment-stepping actor and the gradient-running
  learner are separate threads sharing the replay buffer; the actor acts
  on read-only parameter snapshots refreshed every ``snapshot_every``
  environment steps.  This mirrors driving hardware that will not wait
  for backprop.
"""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..config import TrainSettings
from ..env import EnvError
from .dqn import DQNAgent
from .gru import GruEncoder, IdentityEncoder
from .replay import ReplayBuffer
from .td3 import TD3Agent

UPRIGHT_RAD = 0.2  # |theta_up| below this counts as upright
SOLVED_WINDOW = 50  # episodes in the rolling per-step-reward window


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    wall_ms: float
    epsilon: Optional[float] = None
    buffer: int = 0

    @property
    def per_step(self) -> float:
        return self.ret / self.steps if self.steps else 0.0


@dataclass
class LearningCurve:
    records: List[EpisodeRecord] = field(default_factory=list)
    status: str = "completed"
    env_steps: int = 0
    updates: int = 0

    def returns(self) -> List[float]:
        return [r.ret for r in self.records]

    def rolling_per_step(self, window: int = SOLVED_WINDOW) -> float:
        tail = self.records[-window:]
        if not tail:
            return float("-inf")
        return float(np.mean([r.per_step for r in tail]))

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "return", "steps", "wall_ms"])
            for r in self.records:
                writer.writerow([r.episode, f"{r.ret:.6f}", r.steps, f"{r.wall_ms:.1f}"])


def make_encoder(algo: str, obs_dim: int, cfg: TrainSettings, seed: int):
    if algo in ("rdqn", "rtd3"):
        return GruEncoder(obs_dim, cfg.gru_hidden, seed=seed + 977)
    return IdentityEncoder(obs_dim)


def make_agent(algo: str, env, cfg: TrainSettings, seed: int):
    """Build (agent, encoder) sized for the environment's features."""
    encoder = make_encoder(algo, env.observation_size, cfg, seed)
    if algo in ("dqn", "rdqn"):
        if env.n_actions == 0:
            raise ValueError(f"{algo} needs a discrete-mode environment")
        agent = DQNAgent(encoder.output_dim, env.n_actions, cfg, seed=seed)
    elif algo in ("td3", "rtd3"):
        if env.n_actions != 0:
            raise ValueError(f"{algo} needs a continuous-mode environment")
        agent = TD3Agent(encoder.output_dim, cfg, seed=seed)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return agent, encoder


class Trainer:
    def __init__(self, env, cfg: TrainSettings, seed: Optional[int] = None):
        self.env = env
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.agent, self.encoder = make_agent(cfg.algo, env, cfg, self.seed)
        action_dim = 0 if env.n_actions else 1
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.encoder.output_dim, action_dim)
        self.sample_rng = np.random.default_rng(self.seed + 13)
        self._param_lock = threading.Lock()
        self._snapshot_version = 0

    # -- shared pieces ---------------------------------------------------

    def _act(self, agent, state: np.ndarray, env_steps: int):
        if isinstance(agent, DQNAgent):
            return agent.act(state, env_steps)
        return agent.act(state)

    def _ready(self) -> bool:
        return len(self.buffer) >= max(self.cfg.warmup_steps, self.cfg.batch_size)

    def _learn_once(self) -> None:
        batch = self.buffer.sample(self.cfg.batch_size, self.sample_rng)
        self.agent.update(batch)

    def _solved(self, curve: LearningCurve) -> bool:
        if self.cfg.stop_return is None or len(curve.records) < SOLVED_WINDOW:
            return False
        return curve.rolling_per_step() >= self.cfg.stop_return

    # -- synchronous mode ------------------------------------------------

    def run(self) -> LearningCurve:
        if self.cfg.async_learner:
            return self._run_async()
        return self._run_sync()

    def _run_sync(self) -> LearningCurve:
        curve = LearningCurve()
        env_steps = 0
        try:
            for episode in range(self.cfg.episodes):
                t0 = time.perf_counter()
                obs, _info = self.env.reset()
                self.encoder.reset()
                state = self.encoder.encode(obs)
                ret, steps = 0.0, 0
                while True:
                    action = self._act(self.agent, state, env_steps)
                    obs, reward, terminated, truncated, _info = self.env.step(action)
                    next_state = self.encoder.encode(obs)
                    self.buffer.push(state, action, reward, next_state, terminated)
                    ret += reward
                    steps += 1
                    env_steps += 1
                    if self._ready():
                        self._learn_once()
                        curve.updates += 1
                    state = next_state
                    if terminated or truncated:
                        break
                eps = (
                    self.agent.epsilon(env_steps) if isinstance(self.agent, DQNAgent) else None
                )
                curve.records.append(EpisodeRecord(
                    episode, ret, steps, (time.perf_counter() - t0) * 1000.0,
                    epsilon=eps, buffer=len(self.buffer),
                ))
                if self._solved(curve):
                    curve.status = "early_stop"
                    break
        except (EnvError, ConnectionError, TimeoutError) as exc:
            curve.status = f"error: {exc}"
        curve.env_steps = env_steps
        return curve

    # -- asynchronous mode -----------------------------------------------

    def _run_async(self) -> LearningCurve:
        curve = LearningCurve()
        stop = threading.Event()
        update_count = [0]

        def learner() -> None:
            while not stop.is_set():
                if not self._ready():
                    time.sleep(0.001)
                    continue
                with self._param_lock:
                    self._learn_once()
                update_count[0] += 1

        thread = threading.Thread(target=learner, name="learner", daemon=True)
        thread.start()

        behaviour, _ = make_agent(self.cfg.algo, self.env, self.cfg, self.seed)
        behaviour.load_policy_params(self.agent.policy_params())
        env_steps = 0
        try:
            for episode in range(self.cfg.episodes):
                t0 = time.perf_counter()
                obs, _info = self.env.reset()
                self.encoder.reset()
                state = self.encoder.encode(obs)
                ret, steps = 0.0, 0
                while True:
                    action = self._act(behaviour, state, env_steps)
                    obs, reward, terminated, truncated, _info = self.env.step(action)
                    next_state = self.encoder.encode(obs)
                    self.buffer.push(state, action, reward, next_state, terminated)
                    ret += reward
                    steps += 1
                    env_steps += 1
                    if env_steps % self.cfg.snapshot_every == 0:
                        with self._param_lock:
                            params = self.agent.policy_params()
                        behaviour.load_policy_params(params)
                        self._snapshot_version += 1
                    state = next_state
                    if terminated or truncated:
                        break
                eps = (
                    behaviour.epsilon(env_steps) if isinstance(behaviour, DQNAgent) else None
                )
                curve.records.append(EpisodeRecord(
                    episode, ret, steps, (time.perf_counter() - t0) * 1000.0,
                    epsilon=eps, buffer=len(self.buffer),
                ))
                if self._solved(curve):
                    curve.status = "early_stop"
                    break
        except (EnvError, ConnectionError, TimeoutError) as exc:
            curve.status = f"error: {exc}"
        finally:
            stop.set()
            thread.join(timeout=5.0)
        with self._param_lock:
            behaviour.load_policy_params(self.agent.policy_params())
        curve.env_steps = env_steps
        curve.updates = update_count[0]
        return curve


def evaluate(env, agent, encoder, episodes: int = 10, greedy: bool = True) -> List[Dict[str, Any]]:
    """Greedy rollouts reporting return, upright fraction and time-to-upright."""
    results = []
    for _ in range(episodes):
        obs, _info = env.reset()
        encoder.reset()
        state = encoder.encode(obs)
        ret, steps = 0.0, 0
        upright_late = 0
        late_steps = 0
        time_to_upright: Optional[int] = None
        while True:
            if isinstance(agent, DQNAgent):
                action = agent.act(state, greedy=greedy)
            else:
                action = agent.act(state, greedy=greedy)
            obs, reward, terminated, truncated, info = env.step(action)
            state = encoder.encode(obs)
            ret += reward
            steps += 1
            upright = abs(info["theta_up"]) < UPRIGHT_RAD
            if upright and time_to_upright is None:
                time_to_upright = steps
            if steps >= 100:
                late_steps += 1
                if upright:
                    upright_late += 1
            if terminated or truncated:
                break
        results.append({
            "return": ret,
            "steps": steps,
            "per_step": ret / steps if steps else 0.0,
            "time_to_upright": time_to_upright,
            "upright_fraction_late": upright_late / late_steps if late_steps else 0.0,
        })
    return results


# -- persistence ---------------------------------------------------------


def config_hash(config: Dict[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5.0, check=False,
        )
        rev = out.stdout.strip()
        return rev if out.returncode == 0 and rev else "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def make_manifest(algo: str, env_variant: str, config: Dict[str, Any], seed: int,
                  started: float, finished: float, status: str,
                  extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    manifest = {
        "run_id": uuid.uuid4().hex[:12],
        "algorithm": algo,
        "env_variant": env_variant,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(finished)),
        "wall_seconds": round(finished - started, 3),
        "status": status,
        "git_revision": git_revision(),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(path: str, manifest: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
