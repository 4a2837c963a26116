"""Settings: dataclasses with TOML loading and strict key checking.

Layout mirrors how runs are wired: ``[rig]`` describes the emulated
apparatus (clock mode, cadences, physics overrides, channel faults),
``[env]`` the environment built on top of it, ``[train]`` the learning
run.  Unknown keys raise :class:`ConfigError` so typos fail loudly
instead of silently training with defaults.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .physics import PhysicsParams
from .transport.broker import ChannelFault


class ConfigError(ValueError):
    """Bad settings file: unknown key, wrong type or invalid value."""


@dataclass
class RigSettings:
    clock_mode: str = "virtual"
    device_ids: List[int] = field(default_factory=lambda: [0])
    obs_interval_ms: int = 15
    act_interval_ms: int = 60
    host: str = "127.0.0.1"
    port: int = 1899
    physics: Dict[str, float] = field(default_factory=dict)
    action_fault: Optional[ChannelFault] = None
    observation_fault: Optional[ChannelFault] = None

    def physics_params(self) -> PhysicsParams:
        try:
            return PhysicsParams(**self.physics)
        except TypeError as exc:
            raise ConfigError(f"bad [rig.physics] key: {exc}") from None


@dataclass
class EnvSettings:
    mode: str = "discrete"  # discrete | continuous
    step_time_ms: float = 56.0  # wire pacing; 500 steps ~ 28 s
    episode_steps: int = 500
    reset_hold_ms: float = 2040.0
    stale_limit_ms: float = 500.0
    action_filter: float = 0.85
    delay: str = "none"  # none | delayed
    randomize_init: bool = False
    feature_mode: str = "encoded"  # encoded | raw
    include_velocity: bool = True
    include_acceleration: bool = True
    include_arm_velocity: bool = True
    include_time_since_action: bool = True
    include_age: bool = True

    def validate(self) -> "EnvSettings":
        if self.mode not in ("discrete", "continuous"):
            raise ConfigError(f"env.mode must be discrete or continuous, got {self.mode!r}")
        if self.delay not in ("none", "delayed"):
            raise ConfigError(f"env.delay must be none or delayed, got {self.delay!r}")
        if self.feature_mode not in ("encoded", "raw"):
            raise ConfigError(f"env.feature_mode must be encoded or raw, got {self.feature_mode!r}")
        if not 0.0 <= self.action_filter < 1.0:
            raise ConfigError("env.action_filter must be in [0, 1)")
        if self.episode_steps < 1 or self.step_time_ms <= 0:
            raise ConfigError("env.episode_steps and env.step_time_ms must be positive")
        return self


@dataclass
class TrainSettings:
    algo: str = "dqn"  # dqn | rdqn | td3 | rtd3
    episodes: int = 400
    seed: int = 1
    gamma: float = 0.99
    lr: float = 3e-4
    batch_size: int = 128
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    hidden: int = 256
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 50_000
    target_sync_steps: int = 1000
    tau: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1
    gru_hidden: int = 32
    train_gru: bool = False
    async_learner: bool = False
    snapshot_every: int = 500
    eval_every: int = 0  # episodes between greedy evals; 0 disables
    out_dir: str = "runs"
    stop_return: Optional[float] = None  # early stop once mean return reaches this

    def validate(self) -> "TrainSettings":
        if self.algo not in ("dqn", "rdqn", "td3", "rtd3"):
            raise ConfigError(f"train.algo must be one of dqn, rdqn, td3, rtd3; got {self.algo!r}")
        if self.train_gru:
            raise ConfigError(
                "train.train_gru is not supported: recurrent encodings are cached in the "
                "replay buffer, so updating the encoder would invalidate stored transitions. "
                "The encoder uses fixed randomly-initialised weights."
            )
        return self


@dataclass
class Settings:
    rig: RigSettings = field(default_factory=RigSettings)
    env: EnvSettings = field(default_factory=EnvSettings)
    train: TrainSettings = field(default_factory=TrainSettings)

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        for key in ("action_fault", "observation_fault"):
            if out["rig"][key] is not None:
                out["rig"][key] = dataclasses.asdict(getattr(self.rig, key))
        return out


def _fill(instance: Any, data: Dict[str, Any], section: str) -> Any:
    names = {f.name for f in dataclasses.fields(instance)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key!r}")
        setattr(instance, key, value)
    return instance


def _fault_from(data: Dict[str, Any], section: str) -> ChannelFault:
    names = {f.name for f in dataclasses.fields(ChannelFault)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key!r}")
    fault = ChannelFault(**data)
    try:
        fault.validate()
    except ValueError as exc:
        raise ConfigError(f"bad [{section}]: {exc}") from None
    return fault


def settings_from_dict(data: Dict[str, Any]) -> Settings:
    settings = Settings()
    for section in data:
        if section not in ("rig", "env", "train"):
            raise ConfigError(f"unknown section [{section}]")
    rig_data = dict(data.get("rig", {}))
    faults = rig_data.pop("faults", {})
    if not isinstance(faults, dict):
        raise ConfigError("[rig.faults] must be a table")
    _fill(settings.rig, rig_data, "rig")
    for channel, fault_data in faults.items():
        if channel == "actions":
            settings.rig.action_fault = _fault_from(fault_data, "rig.faults.actions")
        elif channel == "observations":
            settings.rig.observation_fault = _fault_from(fault_data, "rig.faults.observations")
        else:
            raise ConfigError(f"unknown fault channel [rig.faults.{channel}]")
    _fill(settings.env, dict(data.get("env", {})), "env").validate()
    _fill(settings.train, dict(data.get("train", {})), "train").validate()
    settings.rig.physics_params()  # fail fast on bad physics overrides
    return settings


def load_settings(path: str) -> Settings:
    """Read a TOML settings file; raises ConfigError on any problem."""
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read settings file {path}: {exc}") from None
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return settings_from_dict(data)
