"""Emulated microcontroller program.

Mirrors what runs on the rig's MCU: it polls a 1024-count absolute encoder,
derives wraparound-safe velocities and accelerations, applies safety
overrides directly before actuation, executes discrete or continuous servo
commands, and streams comma-separated observation lines.  Observation
streaming and acting run on independent cadences; the last received action
keeps being executed until a new one arrives.

The functions in the first half are pure (easy to test against hand
calculations); ``Firmware`` at the bottom is the stateful task that a rig
drives from its clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

ENCODER_COUNTS = 1024
TWO_PI = 2.0 * math.pi
# Normalized servo travel [-1, 1] spans half a revolution, so one unit of
# command is a quarter revolution.  Used to express arm velocity in rev/s.
SERVO_UNIT_REV = 0.25


class FirmwareError(ValueError):
    pass


class CommandParseError(FirmwareError):
    """Malformed wire payload; the firmware logs and ignores these."""


class Mode(Enum):
    DISCRETE = "d"
    CONTINUOUS = "c"


# Action index -> servo positions moved (sign: negative is left).
DISCRETE_DELTAS = (0, -1, -2, +1, +2)
STOP_ACTION = 0


@dataclass
class FirmwareConfig:
    obs_interval_ms: int = 14      # observation streaming period
    act_interval_ms: int = 56      # action execution period
    mode: Mode = Mode.DISCRETE
    encoder_offset: int = 0        # counts added after quantization
    safety_rps: float = 2.0        # |pendulum velocity| limit, rev/s
    streaming: bool = True
    discrete_increment: float = 0.1    # normalized servo travel per position

    def validate(self) -> None:
        if self.obs_interval_ms < 1 or self.act_interval_ms < 1:
            raise FirmwareError("intervals must be >= 1 ms")
        if not (math.isfinite(self.safety_rps) and self.safety_rps > 0):
            raise FirmwareError("safety_rps must be > 0")
        if not (0 < self.discrete_increment <= 1):
            raise FirmwareError("discrete_increment must be in (0, 1]")


@dataclass(frozen=True)
class DiscreteAction:
    index: int  # 0..4


@dataclass(frozen=True)
class ContinuousAction:
    value: float  # [-1, 1]


@dataclass(frozen=True)
class ConfigUpdate:
    key: str
    value: Union[int, float, Mode, bool]


Action = Union[DiscreteAction, ContinuousAction]
Command = Union[DiscreteAction, ContinuousAction, ConfigUpdate]


def quantize(theta: float, offset: int = 0) -> int:
    """Encoder count for a pendulum angle: bottom -> 0, upright -> 512.

    Reduces theta mod 2*pi, scales to 1024 counts, rounds half-up and wraps.
    """
    if not math.isfinite(theta):
        raise FirmwareError("non-finite angle")
    frac = math.fmod(theta, TWO_PI)
    if frac < 0:
        frac += TWO_PI
    count = math.floor(frac / TWO_PI * ENCODER_COUNTS + 0.5)
    return (count + offset) % ENCODER_COUNTS


def delta_counts(prev: int, curr: int) -> int:
    """Signed count change assuming the encoder took the shorter interval.

    Result is in (-512, 512]; the antipodal tie |d| = 512 resolves to +512.
    """
    d = curr - prev
    if d > 512:
        d -= ENCODER_COUNTS
    elif d <= -512:
        d += ENCODER_COUNTS
    return d


def estimate_acceleration(prev_smoothed: float, curr_smoothed: float, dt: float) -> float:
    """First difference of smoothed velocities, rev/s^2."""
    if dt <= 0:
        raise FirmwareError(f"interval must be positive, got {dt}")
    return (curr_smoothed - prev_smoothed) / dt


@dataclass
class FirmwareState:
    """Mutable per-firmware bookkeeping between ticks."""

    last_action: Action = DiscreteAction(STOP_ACTION)
    servo_command: float = 0.0              # normalized position in [-1, 1]
    last_count: Optional[int] = None
    last_poll_ms: Optional[int] = None
    velocity_history: List[float] = field(default_factory=list)  # raw, rev/s, len <= 3
    last_smoothed_velocity: float = 0.0
    pend_acceleration: float = 0.0
    arm_velocity: float = 0.0
    last_command_poll: Optional[float] = None


def estimate_velocity(state: FirmwareState, d: int, dt: float) -> float:
    """Push one raw velocity sample and return the 3-sample smoothed value.

    raw = d / 1024 / dt in rev/s; the history keeps the last three raw
    samples and the returned velocity is their arithmetic mean.
    """
    if dt <= 0:
        raise FirmwareError(f"interval must be positive, got {dt}")
    raw = d / ENCODER_COUNTS / dt
    state.velocity_history.append(raw)
    if len(state.velocity_history) > 3:
        state.velocity_history.pop(0)
    smoothed = sum(state.velocity_history) / len(state.velocity_history)
    state.last_smoothed_velocity = smoothed
    return smoothed


def apply_safety(
    action: Action, servo_command: float, pendulum_rps: float, cfg: FirmwareConfig
) -> Action:
    """Substitute a stop when limits are exceeded.  Never raises.

    Triggers: pendulum spinning faster than the safety threshold, or a
    discrete move that would push the servo past an end stop it already
    sits on.  In continuous mode the substitute is "hold position".
    """
    over_speed = abs(pendulum_rps) > cfg.safety_rps
    if isinstance(action, DiscreteAction):
        delta = DISCRETE_DELTAS[action.index] if 0 <= action.index < 5 else 0
        at_limit = (servo_command >= 1.0 and delta > 0) or (servo_command <= -1.0 and delta < 0)
        if over_speed or at_limit:
            return DiscreteAction(STOP_ACTION)
        return action
    if over_speed:
        return ContinuousAction(servo_command)  # hold where we are
    return action


def execute_action(state: FirmwareState, cfg: FirmwareConfig) -> float:
    """Apply the last received action to the servo command, clamped to [-1, 1].

    Discrete actions move by a configured increment per position and repeat
    every acting tick; a continuous action is a position the servo holds.
    Returns the new command.
    """
    action = state.last_action
    if isinstance(action, DiscreteAction):
        if not 0 <= action.index < 5:
            raise FirmwareError(f"unknown action index {action.index}")
        delta = DISCRETE_DELTAS[action.index] * cfg.discrete_increment
        command = state.servo_command + delta
    else:
        command = action.value
    command = min(1.0, max(-1.0, command))
    state.servo_command = command
    return command


def format_observation(
    t_ms: int, enc: int, servo: float, pend_vel: float, pend_acc: float, arm_vel: float
) -> str:
    """Wire payload: time, encoder, servo position, velocities and acceleration.

    Integers for time and encoder count, fixed six-decimal notation for the
    rest, comma separated.
    """
    return f"{t_ms},{enc},{servo:.6f},{pend_vel:.6f},{pend_acc:.6f},{arm_vel:.6f}"


def parse_command(payload: str) -> Command:
    """Decode one action or configuration payload.

    ``m<0..4>`` is a discrete action, ``b<float in [-1, 1]>`` a continuous
    one, ``cfg:key=value`` a configuration update.  Raises
    CommandParseError on anything else; callers log and drop.
    """
    if not payload:
        raise CommandParseError("empty payload")
    head, body = payload[0], payload[1:]
    if head == "m":
        try:
            idx = int(body)
        except ValueError:
            raise CommandParseError(f"bad discrete action {payload!r}") from None
        if not 0 <= idx <= 4:
            raise CommandParseError(f"discrete action out of range: {payload!r}")
        return DiscreteAction(idx)
    if head == "b":
        try:
            value = float(body)
        except ValueError:
            raise CommandParseError(f"bad continuous action {payload!r}") from None
        if not (math.isfinite(value) and -1.0 <= value <= 1.0):
            raise CommandParseError(f"continuous action out of range: {payload!r}")
        return ContinuousAction(value)
    if payload.startswith("cfg:"):
        return _parse_config(payload[4:])
    raise CommandParseError(f"unknown command {payload!r}")


_CFG_PARSERS: dict = {
    "encoder_offset": int,
    "obs_interval_ms": int,
    "act_interval_ms": int,
    "safety_rps": float,
}


def _parse_config(body: str) -> ConfigUpdate:
    key, sep, raw = body.partition("=")
    if not sep:
        raise CommandParseError(f"config update missing '=': {body!r}")
    if key in _CFG_PARSERS:
        try:
            return ConfigUpdate(key, _CFG_PARSERS[key](raw))
        except ValueError:
            raise CommandParseError(f"bad value for {key}: {raw!r}") from None
    if key == "mode":
        if raw == "d":
            return ConfigUpdate("mode", Mode.DISCRETE)
        if raw == "c":
            return ConfigUpdate("mode", Mode.CONTINUOUS)
        raise CommandParseError(f"mode must be 'd' or 'c', got {raw!r}")
    if key == "stream":
        if raw in ("0", "1"):
            return ConfigUpdate("streaming", raw == "1")
        raise CommandParseError(f"stream must be '0' or '1', got {raw!r}")
    raise CommandParseError(f"unknown config key {key!r}")


class Firmware:
    """The MCU task: inbox of commands in, observation lines out.

    A rig drives it through :meth:`on_message` (payload arrived on the
    actions topic) and the two cadence entry points :meth:`obs_tick` and
    :meth:`act_tick`, which the rig schedules at ``obs_interval_ms`` and
    ``act_interval_ms``.  The servo command it maintains is the target the
    physics slews toward.

    ``read_angle`` supplies the true pendulum angle at poll time and
    ``publish`` sends a formatted observation line.  Keeping these as
    callables keeps the firmware ignorant of both physics and transport.
    The arm has no sensor of its own, so arm velocity is derived from the
    servo command history, as the real controller must.
    """

    def __init__(
        self,
        cfg: FirmwareConfig,
        read_angle: Callable[[], float],
        publish: Callable[[str], None],
        log: Optional[Callable[[str], None]] = None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.state = FirmwareState()
        self._read_angle = read_angle
        self._publish = publish
        self._log = log or (lambda msg: None)
        self.parse_errors = 0
        self.safety_triggers = 0

    # -- inbound ---------------------------------------------------------

    def on_message(self, payload: str) -> None:
        """Handle one payload from the actions topic.  Never raises."""
        try:
            cmd = parse_command(payload)
        except CommandParseError as exc:
            self.parse_errors += 1
            self._log(f"dropped bad command: {exc}")
            return
        if isinstance(cmd, ConfigUpdate):
            self._apply_config(cmd)
        else:
            self.state.last_action = cmd

    def _apply_config(self, update: ConfigUpdate) -> None:
        setattr(self.cfg, update.key, update.value)
        try:
            self.cfg.validate()
        except FirmwareError as exc:
            self._log(f"rejected config update {update.key}: {exc}")

    # -- cadences --------------------------------------------------------

    def obs_tick(self, t_ms: int) -> Optional[str]:
        """Poll the encoder, refresh derived values, publish if streaming.

        Velocity and acceleration are only recomputed here, on the
        observation cadence.  Returns the published line (or None).
        """
        st = self.state
        count = quantize(self._read_angle(), self.cfg.encoder_offset)

        if st.last_count is not None and st.last_poll_ms is not None and t_ms > st.last_poll_ms:
            dt = (t_ms - st.last_poll_ms) * 1e-3
            d = delta_counts(st.last_count, count)
            prev_smoothed = st.last_smoothed_velocity
            smoothed = estimate_velocity(st, d, dt)
            st.pend_acceleration = estimate_acceleration(prev_smoothed, smoothed, dt)
            if st.last_command_poll is not None:
                st.arm_velocity = (st.servo_command - st.last_command_poll) * SERVO_UNIT_REV / dt
        st.last_count = count
        st.last_poll_ms = t_ms
        st.last_command_poll = st.servo_command

        if not self.cfg.streaming:
            return None
        line = format_observation(
            t_ms,
            count,
            st.servo_command,
            st.last_smoothed_velocity,
            st.pend_acceleration,
            st.arm_velocity,
        )
        self._publish(line)
        return line

    def act_tick(self) -> float:
        """Safety check then actuation; returns the servo command in force."""
        st = self.state
        safe = apply_safety(st.last_action, st.servo_command, st.last_smoothed_velocity, self.cfg)
        if safe is not st.last_action:
            self.safety_triggers += 1
            st.last_action = safe
        try:
            return execute_action(st, self.cfg)
        except FirmwareError as exc:
            self._log(f"action rejected: {exc}")
            return st.servo_command
