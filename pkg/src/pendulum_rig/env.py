"""Gym-style swing-up environments: wire-attached and direct simulation.

Both environments expose the same interface — ``reset()`` returning
``(observation, info)`` and ``step(action)`` returning ``(observation,
reward, terminated, truncated, info)`` — and both consume the firmware's
comma-separated observation lines, so an agent cannot tell them apart.

* :class:`PendulumWireEnv` talks to a rig through a client session
  (loopback or TCP): it publishes action commands, waits one control
  period, then uses the freshest cached observation.  Fully asynchronous,
  like driving real hardware.
* :class:`PendulumSimEnv` steps physics and firmware directly in-process.
  With the default 12-frame skip and matching cadences it reproduces the
  wire path exactly; the ``delayed`` variant instead observes after 6
  frames and then advances 0-2 extra frames, so observations lag the true
  state by a random amount.

Reward is ``-(theta_up)^2 - 0.5 * omega^2`` with the angle measured from
upright in radians and the angular velocity in revolutions per second.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .config import ConfigError, EnvSettings
from .firmware import (
    ENCODER_COUNTS,
    ContinuousAction,
    DiscreteAction,
    Firmware,
    FirmwareConfig,
    Mode,
    parse_command,
)
from .physics import (
    DelayModel,
    PendulumState,
    PhysicsParams,
    step_frame,
    wrap_pi,
)
from .rig import act_topic, obs_topic

N_DISCRETE_ACTIONS = 5
ACTION_LOW, ACTION_HIGH = -1.0, 1.0

VEL_SCALE = 0.25  # revolutions/s and rev/s^2 into roughly [-1, 1]
AGE_SCALE = 5.0  # seconds scaled so one 60 ms period reads as 0.3
SINCE_ACTION_CAP_MS = 1000.0

ANGULAR_WEIGHT = 1.0
VELOCITY_WEIGHT = 0.5


class EnvError(RuntimeError):
    """Environment-level failure (protocol misuse, bad action, ...)."""


class StaleObservationError(EnvError):
    """No sufficiently fresh observation was available when needed."""


@dataclass(frozen=True)
class ObservationVector:
    """One parsed firmware observation line."""

    t_ms: int
    count: int
    servo: float
    pend_vel: float
    pend_acc: float
    arm_vel: float

    @classmethod
    def parse(cls, line: str) -> "ObservationVector":
        parts = line.split(",")
        if len(parts) != 6:
            raise EnvError(f"observation needs 6 fields, got {len(parts)}: {line!r}")
        try:
            return cls(
                t_ms=int(parts[0]),
                count=int(parts[1]),
                servo=float(parts[2]),
                pend_vel=float(parts[3]),
                pend_acc=float(parts[4]),
                arm_vel=float(parts[5]),
            )
        except ValueError as exc:
            raise EnvError(f"bad observation line {line!r}: {exc}") from None


def angle_from_count(count: int) -> float:
    """Encoder count back to radians, zero at the bottom."""
    return (count % ENCODER_COUNTS) / ENCODER_COUNTS * 2.0 * math.pi


def theta_up_from_count(count: int) -> float:
    """Signed angle from the upright position in [-pi, pi)."""
    return wrap_pi(angle_from_count(count) - math.pi)


def reward_from(obs: ObservationVector) -> float:
    theta_up = theta_up_from_count(obs.count)
    return -(ANGULAR_WEIGHT * theta_up * theta_up + VELOCITY_WEIGHT * obs.pend_vel * obs.pend_vel)


def feature_names(settings: EnvSettings) -> Tuple[str, ...]:
    encoded = settings.feature_mode == "encoded"
    names = ["sin_angle", "cos_angle"] if encoded else ["angle_rev"]
    names.append("servo")
    if settings.include_velocity:
        names.append("pend_vel")
    if settings.include_acceleration:
        names.append("pend_acc")
    if settings.include_arm_velocity:
        names.append("arm_vel")
    if settings.include_time_since_action:
        names.append("since_action")
    if settings.include_age:
        names.append("age")
    return tuple(names)


def feature_size(settings: EnvSettings) -> int:
    return len(feature_names(settings))


def build_features(
    settings: EnvSettings, obs: ObservationVector, age_ms: float, since_action_ms: float
) -> np.ndarray:
    """Observation line plus timing telemetry into the agent's vector."""
    encoded = settings.feature_mode == "encoded"
    angle = angle_from_count(obs.count)
    if encoded:
        values = [math.sin(angle), math.cos(angle), obs.servo]
    else:
        values = [obs.count / ENCODER_COUNTS, obs.servo]
    scale = VEL_SCALE if encoded else 1.0
    if settings.include_velocity:
        values.append(obs.pend_vel * scale)
    if settings.include_acceleration:
        values.append(obs.pend_acc * scale)
    if settings.include_arm_velocity:
        values.append(obs.arm_vel * scale)
    tscale = AGE_SCALE if encoded else 1.0
    if settings.include_time_since_action:
        since = min(max(since_action_ms, 0.0), SINCE_ACTION_CAP_MS)
        values.append(since / 1000.0 * tscale)
    if settings.include_age:
        values.append(max(age_ms, 0.0) / 1000.0 * tscale)
    return np.asarray(values, dtype=np.float64)


class ActionFilter:
    """Exponential smoothing of continuous commands: a <- c*a + (1-c)*u."""

    def __init__(self, c: float):
        if not 0.0 <= c < 1.0:
            raise ValueError("filter coefficient must be in [0, 1)")
        self.c = c
        self.value = 0.0

    def reset(self, value: float = 0.0) -> None:
        self.value = value

    def apply(self, u: float) -> float:
        self.value = self.c * self.value + (1.0 - self.c) * u
        return self.value


def format_action(settings: EnvSettings, action, filt: Optional[ActionFilter]) -> Tuple[str, float]:
    """Agent action to a wire command; returns (payload, servo-facing value)."""
    if settings.mode == "discrete":
        idx = int(action)
        if not 0 <= idx < N_DISCRETE_ACTIONS:
            raise EnvError(f"discrete action must be in [0, {N_DISCRETE_ACTIONS}), got {action!r}")
        return f"m{idx}", float(idx)
    u = float(np.clip(float(action), ACTION_LOW, ACTION_HIGH))
    value = filt.apply(u) if filt is not None else u
    return f"b{value:.6f}", value


class _EnvCore:
    """Shared bookkeeping: episode counters, features, result assembly."""

    def __init__(self, settings: EnvSettings):
        settings.validate()
        self.settings = settings
        self.mode = settings.mode
        self.observation_size = feature_size(settings)
        self.n_actions = N_DISCRETE_ACTIONS if settings.mode == "discrete" else 0
        self.action_low, self.action_high = ACTION_LOW, ACTION_HIGH
        self.filter = ActionFilter(settings.action_filter) if settings.mode == "continuous" else None
        self.step_index = 0
        self.episode_index = -1

    def begin_episode(self) -> None:
        self.step_index = 0
        self.episode_index += 1
        if self.filter is not None:
            self.filter.reset(0.0)

    def result(
        self, obs: ObservationVector, age_ms: float, since_ms: float
    ) -> Tuple[np.ndarray, float, bool, bool, Dict[str, Any]]:
        vector = build_features(self.settings, obs, age_ms, since_ms)
        rew = reward_from(obs)
        self.step_index += 1
        truncated = self.step_index >= self.settings.episode_steps
        info = self._info(obs, age_ms, since_ms)
        return vector, rew, False, truncated, info

    def _info(self, obs: ObservationVector, age_ms: float, since_ms: float) -> Dict[str, Any]:
        return {
            "t_ms": obs.t_ms,
            "count": obs.count,
            "servo": obs.servo,
            "pend_vel": obs.pend_vel,
            "pend_acc": obs.pend_acc,
            "arm_vel": obs.arm_vel,
            "theta_up": theta_up_from_count(obs.count),
            "age_ms": age_ms,
            "since_action_ms": since_ms,
            "step": self.step_index,
            "episode": self.episode_index,
        }


class PendulumWireEnv:
    """Environment speaking to a rig over a client session.

    The session can be a :class:`~pendulum_rig.rig.LoopbackSession` or a
    :class:`~pendulum_rig.transport.tcp.TcpSession`; either way stepping is
    asynchronous: publish the command, wait one control period on the rig
    clock, use the latest observation that has arrived.  An observation
    older than ``stale_limit_ms`` raises :class:`StaleObservationError`.
    """

    def __init__(self, session, settings: Optional[EnvSettings] = None, device_id: int = 0):
        settings = settings or EnvSettings()
        if settings.delay != "none":
            raise ConfigError(
                "env.delay applies to the direct simulator only; over the wire, "
                "delay comes from the transport itself (see [rig.faults])"
            )
        if settings.randomize_init:
            raise ConfigError("randomize_init is not possible over the wire")
        self.core = _EnvCore(settings)
        self.settings = settings
        self.session = session
        self.device_id = device_id
        self._lock = threading.Lock()
        self._latest_obs: Optional[ObservationVector] = None
        self._received = 0
        self.parse_errors = 0
        self._since_anchor_ms = session.now_ms()
        session.subscribe(obs_topic(device_id), self._on_observation)
        mode_flag = "d" if settings.mode == "discrete" else "c"
        session.publish(act_topic(device_id), f"cfg:mode={mode_flag}".encode())
        session.publish(act_topic(device_id), b"cfg:stream=1")

    # -- session plumbing ------------------------------------------------

    def _on_observation(self, _topic: str, payload: bytes) -> None:
        line = payload.decode("utf-8", errors="replace")
        try:
            obs = ObservationVector.parse(line)
        except EnvError:
            # Malformed lines are skipped; the last good observation stays
            # cached so one corrupt message never breaks a step.
            with self._lock:
                self.parse_errors += 1
            return
        with self._lock:
            self._latest_obs = obs
            self._received += 1

    @property
    def observations_received(self) -> int:
        """How many well-formed observation lines have arrived so far."""
        with self._lock:
            return self._received

    def _latest(self) -> ObservationVector:
        with self._lock:
            obs = self._latest_obs
        if obs is None:
            raise StaleObservationError(
                "no observation received yet: is the rig running and streaming?"
            )
        return obs

    def _use(self) -> Tuple[ObservationVector, float, float]:
        now = self.session.now_ms()
        obs = self._latest()
        age_ms = now - obs.t_ms
        if age_ms > self.settings.stale_limit_ms:
            raise StaleObservationError(
                f"freshest observation is {age_ms:.0f} ms old "
                f"(limit {self.settings.stale_limit_ms:.0f} ms)"
            )
        return obs, age_ms, now - self._since_anchor_ms

    def _publish_action(self, payload: str) -> None:
        self.session.publish(act_topic(self.device_id), payload.encode())
        self._since_anchor_ms = self.session.now_ms()

    # -- gym surface -----------------------------------------------------

    @property
    def observation_size(self) -> int:
        return self.core.observation_size

    @property
    def n_actions(self) -> int:
        return self.core.n_actions

    def reset(self, seed: Optional[int] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
        """Hold the stop command for the configured settle time, then observe."""
        del seed  # the wire carries no way to teleport the pendulum
        stop = "m0" if self.settings.mode == "discrete" else "b0.000000"
        self._publish_action(stop)
        self.session.sleep_ms(self.settings.reset_hold_ms)
        self.core.begin_episode()
        obs, age_ms, since_ms = self._use()
        vector = build_features(self.settings, obs, age_ms, since_ms)
        return vector, self.core._info(obs, age_ms, since_ms)

    def step(self, action):
        payload, _value = format_action(self.settings, action, self.core.filter)
        self._publish_action(payload)
        self.session.sleep_ms(self.settings.step_time_ms)
        obs, age_ms, since_ms = self._use()
        return self.core.result(obs, age_ms, since_ms)

    def close(self) -> None:
        self.session.close()


class PendulumSimEnv:
    """Direct simulation sharing the firmware's sensing and actuation code.

    Frames advance in 5 ms ticks with encoder polls on the firmware's
    observation cadence, so velocity smoothing, quantisation and safety
    behave exactly as they do over the wire.  ``delay="delayed"`` switches
    to the short-horizon variant: observe after ``pre_frames``, then step
    the true state a further uniform 0..``extra_frames_max`` frames.
    """

    def __init__(
        self,
        settings: Optional[EnvSettings] = None,
        physics: Optional[PhysicsParams] = None,
        firmware_config: Optional[FirmwareConfig] = None,
        seed: Optional[int] = None,
    ):
        settings = settings or EnvSettings()
        self.core = _EnvCore(settings)
        self.settings = settings
        self.physics = physics or PhysicsParams()
        self.physics.validate()
        # Step duration comes from the frame-skip model, not step_time_ms:
        # the baseline advances 12 frames (60 ms), the delayed variant 6
        # plus a random 0-2 after the observation.
        self.delay = DelayModel.none() if settings.delay == "none" else DelayModel.uniform_extra()
        self._frames_per_step = self.delay.pre_frames
        mode = Mode.DISCRETE if settings.mode == "discrete" else Mode.CONTINUOUS
        if firmware_config is None:
            step_ms = int(round(self._frames_per_step * self.physics.frame_dt * 1000.0))
            firmware_config = FirmwareConfig(obs_interval_ms=15, act_interval_ms=step_ms, mode=mode)
        else:
            firmware_config = replace(firmware_config, mode=mode)
        firmware_config.validate()
        if firmware_config.obs_interval_ms % 5 != 0:
            raise ConfigError("direct sim needs obs_interval_ms to be a multiple of the 5 ms frame")
        self.fw_config = firmware_config
        self.rng = np.random.default_rng(seed)
        self.state = PendulumState()
        self._t_ms = 0
        self._last_obs_line: Optional[str] = None
        self._since_anchor_ms = 0.0
        self.firmware = Firmware(
            self.fw_config,
            read_angle=lambda: self.state.theta,
            publish=self._capture,
        )
        self.firmware.obs_tick(0)

    def _capture(self, line: str) -> None:
        self._last_obs_line = line

    # -- time stepping ---------------------------------------------------

    def _run_frames(self, n: int, poll: bool = True) -> None:
        """Advance n frames, polling the encoder on the observation grid.

        The delayed variant polls once per step at the capture point
        instead (its steps drift off the fixed grid), so it passes
        ``poll=False`` and calls ``obs_tick`` itself.
        """
        obs_ms = self.fw_config.obs_interval_ms
        frame_ms = int(round(self.physics.frame_dt * 1000.0))
        target = self.firmware.state.servo_command * self.physics.phi_max
        for _ in range(n):
            self.state = step_frame(self.state, target, self.physics)
            self._t_ms += frame_ms
            if poll and self._t_ms % obs_ms == 0:
                self.firmware.obs_tick(self._t_ms)
            target = self.firmware.state.servo_command * self.physics.phi_max

    def _hold(self, action, hold_ms: float) -> None:
        """Keep one action in force while time passes, sensing all along."""
        frame_ms = int(round(self.physics.frame_dt * 1000.0))
        total = int(round(hold_ms / frame_ms))
        self._apply(action)
        if self.settings.delay == "none":
            self._run_frames(total)
            return
        chunk = self._frames_per_step
        while total >= chunk:
            self._run_frames(chunk, poll=False)
            self.firmware.obs_tick(self._t_ms)
            total -= chunk
        if total:
            self._run_frames(total, poll=False)

    def _apply(self, action) -> None:
        self.firmware.state.last_action = action
        self.firmware.act_tick()

    def _observe(self) -> ObservationVector:
        if self._last_obs_line is None:
            raise EnvError("no observation captured")
        return ObservationVector.parse(self._last_obs_line)

    # -- gym surface -----------------------------------------------------

    @property
    def observation_size(self) -> int:
        return self.core.observation_size

    @property
    def n_actions(self) -> int:
        return self.core.n_actions

    def reset(self, seed: Optional[int] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        stop = DiscreteAction(0) if self.settings.mode == "discrete" else ContinuousAction(0.0)
        if self.settings.randomize_init:
            self.state = PendulumState(
                theta=float(self.rng.uniform(-math.pi, math.pi)),
                theta_dot=float(self.rng.uniform(-2.0, 2.0)),
                phi=0.0,
                phi_dot=0.0,
                t=self._t_ms / 1000.0,
            )
            self.firmware.state.servo_command = 0.0
            # Brief warm-up so the velocity smoother has a full history.
            if self.settings.delay == "none":
                warm_ms = 3 * self.fw_config.obs_interval_ms
            else:
                warm_ms = 3 * self._frames_per_step * 5
            self._hold(stop, warm_ms)
        else:
            self._hold(stop, self.settings.reset_hold_ms)
        self.core.begin_episode()
        self._since_anchor_ms = float(self._t_ms)
        obs = self._observe()
        age_ms = float(self._t_ms - obs.t_ms)
        since_ms = self.settings.reset_hold_ms if not self.settings.randomize_init else 0.0
        vector = build_features(self.settings, obs, age_ms, since_ms)
        return vector, self.core._info(obs, age_ms, since_ms)

    def step(self, action):
        payload, _value = format_action(self.settings, action, self.core.filter)
        # Route through the firmware's own command parser so the sim and the
        # wire agree bit for bit on what any given payload does.
        self._apply(parse_command(payload))
        self._since_anchor_ms = float(self._t_ms)
        if self.settings.delay == "none":
            self._run_frames(self._frames_per_step)
            obs = self.firmware_observation_now()
        else:
            self._run_frames(self.delay.pre_frames, poll=False)
            self.firmware.obs_tick(self._t_ms)
            obs = self._observe()
            extra = int(self.rng.integers(0, self.delay.extra_frames_max + 1))
            if extra:
                self._run_frames(extra, poll=False)
        age_ms = float(self._t_ms - obs.t_ms)
        since_ms = float(self._t_ms) - self._since_anchor_ms
        return self.core.result(obs, age_ms, since_ms)

    def firmware_observation_now(self) -> ObservationVector:
        """Latest captured line; with aligned cadences its age is zero."""
        return self._observe()

    def close(self) -> None:
        pass
