"""Analytic rotary-pendulum dynamics on a fixed 5 ms frame grid.

The model is a planar point-mass pendulum hanging from the tip of a
servo-driven arm.  Arm motion couples into the pendulum through the
tangential acceleration of the pivot:

    theta_ddot = -(g/L) * sin(theta) - b * theta_dot - (r/L) * phi_ddot * cos(theta)

The servo is a rate-limited first-order lag: it slews toward its target
position at most ``servo_rate_max`` rad/s with time constant ``servo_tau``.
The pendulum state is integrated with RK4 over each frame; the arm angle
follows the slew rule and is clamped to the travel limits.

Everything here is a pure function over value states, so physics can be
stepped from any context (firmware task, direct environment, tests)
without shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

FRAME_DT = 0.005  # integration frame, seconds; fixed by design


class PhysicsError(ValueError):
    """Raised when a state or parameter set is unusable (non-finite, out of range)."""


@dataclass(frozen=True)
class PendulumState:
    """Continuous physical truth at one instant.

    theta is the pendulum angle in radians measured from the hanging-down
    position, counter-clockwise positive, and is *not* reduced mod 2*pi.
    phi is the arm (servo) angle with 0 at center.
    """

    theta: float = 0.0
    theta_dot: float = 0.0
    phi: float = 0.0
    phi_dot: float = 0.0
    t: float = 0.0

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.theta, self.theta_dot, self.phi, self.phi_dot, self.t)
        )


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants of the virtual apparatus.

    Defaults follow the 400 mm arm / 400 mm dowel geometry of the rig;
    damping and servo lag are tunable because the real values are
    construction-dependent.
    """

    L: float = 0.38            # effective pendulum length, m
    r: float = 0.40            # arm length, pivot to encoder, m
    g: float = 9.81            # gravity, m/s^2
    b: float = 0.05            # viscous damping, 1/s
    phi_max: float = math.pi / 2          # servo half-range, rad
    servo_rate_max: float = 5.236         # max arm slew, rad/s (0.20 s / 60 deg)
    servo_tau: float = 0.02               # first-order servo lag, s
    frame_dt: float = FRAME_DT            # integration frame, s

    def validate(self) -> None:
        for name in ("L", "r", "g", "phi_max", "servo_rate_max", "servo_tau", "frame_dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise PhysicsError(f"physics parameter {name} must be strictly positive, got {v!r}")
        if not math.isfinite(self.b) or self.b < 0:
            raise PhysicsError(f"damping b must be finite and >= 0, got {self.b!r}")
        if self.frame_dt != FRAME_DT:
            raise PhysicsError(f"frame_dt is fixed at {FRAME_DT}, got {self.frame_dt!r}")


class DelayKind(Enum):
    NONE = "none"
    UNIFORM_EXTRA = "uniform-extra"


@dataclass(frozen=True)
class DelayModel:
    """Frame-skip schedule for one environment step.

    The baseline advances ``pre_frames`` frames and observes the end state.
    The delayed variant observes after ``pre_frames`` frames, then the world
    keeps moving for a uniformly drawn number of extra frames in
    [0, extra_frames_max].
    """

    kind: DelayKind = DelayKind.NONE
    pre_frames: int = 12
    extra_frames_max: int = 0

    @classmethod
    def none(cls) -> "DelayModel":
        return cls(DelayKind.NONE, pre_frames=12, extra_frames_max=0)

    @classmethod
    def uniform_extra(cls) -> "DelayModel":
        return cls(DelayKind.UNIFORM_EXTRA, pre_frames=6, extra_frames_max=2)

    def validate(self) -> None:
        if self.pre_frames < 1:
            raise PhysicsError("pre_frames must be >= 1")
        if self.extra_frames_max < 0:
            raise PhysicsError("extra_frames_max must be >= 0")
        if self.kind is DelayKind.NONE and self.extra_frames_max != 0:
            raise PhysicsError("delay kind 'none' cannot have extra frames")


def _servo_rate(phi: float, target: float, p: PhysicsParams) -> float:
    """Commanded arm velocity: first-order pull toward target, slew-limited."""
    rate = (target - phi) / p.servo_tau
    if rate > p.servo_rate_max:
        return p.servo_rate_max
    if rate < -p.servo_rate_max:
        return -p.servo_rate_max
    return rate


def step_frame(state: PendulumState, servo_target: float, params: PhysicsParams) -> PendulumState:
    """Advance the state by exactly one frame (frame_dt seconds).

    The arm moves under the rate-limit rule and is clamped to the travel
    limits; its mean acceleration over the frame drives the pendulum, whose
    angle/velocity are integrated with RK4.  Deterministic: no randomness,
    no global state.
    """
    if not state.is_finite() or not math.isfinite(servo_target):
        raise PhysicsError("non-finite state or servo target")
    params.validate()
    dt = params.frame_dt

    # Arm kinematics over the frame.  The slew rule is integrated with a
    # sub-stepped exact-exponential update so the arm settles smoothly; the
    # frame-mean acceleration is what the pendulum feels.
    phi0, phi_dot0 = state.phi, state.phi_dot
    phi1, phi_dot1 = _advance_arm(phi0, servo_target, params, dt)
    phi_ddot = (phi_dot1 - phi_dot0) / dt

    # Pendulum RK4 with the coupling term held at its frame-mean value.
    g_over_l = params.g / params.L
    coupling = (params.r / params.L) * phi_ddot
    b = params.b

    def deriv(th: float, om: float) -> Tuple[float, float]:
        return om, -g_over_l * math.sin(th) - b * om - coupling * math.cos(th)

    th, om = state.theta, state.theta_dot
    k1t, k1o = deriv(th, om)
    k2t, k2o = deriv(th + 0.5 * dt * k1t, om + 0.5 * dt * k1o)
    k3t, k3o = deriv(th + 0.5 * dt * k2t, om + 0.5 * dt * k2o)
    k4t, k4o = deriv(th + dt * k3t, om + dt * k3o)
    theta = th + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    theta_dot = om + (dt / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)

    out = PendulumState(theta=theta, theta_dot=theta_dot, phi=phi1, phi_dot=phi_dot1, t=state.t + dt)
    if not out.is_finite():
        raise PhysicsError("integration produced a non-finite state")
    return out


def _advance_arm(phi: float, target: float, p: PhysicsParams, dt: float) -> Tuple[float, float]:
    """Move the arm toward target for dt seconds under the slew-limited lag.

    Piecewise: while the first-order pull exceeds the slew limit the arm
    moves at constant max rate; once inside the linear region it follows the
    exact exponential decay toward the target.  Travel limits clamp both the
    effective target and the final angle.
    """
    lo, hi = -p.phi_max, p.phi_max
    tgt = min(hi, max(lo, target))
    err = tgt - phi
    if err == 0.0:
        return phi, 0.0

    remaining = dt
    # Saturated phase: |err|/tau > rate_max
    sat_err = p.servo_rate_max * p.servo_tau
    if abs(err) > sat_err:
        direction = 1.0 if err > 0 else -1.0
        t_sat = (abs(err) - sat_err) / p.servo_rate_max
        if t_sat >= remaining:
            phi_new = phi + direction * p.servo_rate_max * remaining
            return phi_new, direction * p.servo_rate_max
        phi = tgt - direction * sat_err
        remaining -= t_sat

    # Linear phase: exact exponential toward the target.
    err = tgt - phi
    decay = math.exp(-remaining / p.servo_tau)
    phi_new = tgt - err * decay
    phi_dot_end = (tgt - phi_new) / p.servo_tau
    phi_new = min(hi, max(lo, phi_new))
    return phi_new, phi_dot_end


def step_frames(
    state: PendulumState, servo_target: float, params: PhysicsParams, n: int
) -> PendulumState:
    """Advance n frames with the same servo target (frame-skip)."""
    if n < 1:
        raise PhysicsError(f"frame count must be >= 1, got {n}")
    for _ in range(n):
        state = step_frame(state, servo_target, params)
    return state


def step_with_delay(
    state: PendulumState,
    servo_target: float,
    params: PhysicsParams,
    model: DelayModel,
    rng,
) -> Tuple[PendulumState, PendulumState, int]:
    """One environment step under a delay model.

    Advances ``pre_frames`` frames and snapshots the observed state; the
    world then keeps moving for a uniformly drawn number of extra frames.
    Returns (observed, true_end, extra).  For the no-delay model observed
    and true_end coincide and extra is 0.
    """
    model.validate()
    observed = step_frames(state, servo_target, params, model.pre_frames)
    if model.kind is DelayKind.NONE or model.extra_frames_max == 0:
        return observed, observed, 0
    extra = int(rng.integers(0, model.extra_frames_max + 1))
    true_end = observed if extra == 0 else step_frames(observed, servo_target, params, extra)
    return observed, true_end, extra


def total_energy(state: PendulumState, params: PhysicsParams) -> float:
    """Mechanical energy of the pendulum alone (unit point mass, arm frozen).

    Zero when hanging at rest; used as a conservation/dissipation oracle.
    """
    if not state.is_finite():
        raise PhysicsError("non-finite state")
    kinetic = 0.5 * params.L ** 2 * state.theta_dot ** 2
    potential = params.g * params.L * (1.0 - math.cos(state.theta))
    return kinetic + potential


def theta_from_upright(theta: float) -> float:
    """Angle from the upright position, wrapped to [-pi, pi].

    theta is measured from the bottom, so upright is theta = pi.
    """
    return wrap_pi(theta - math.pi)


def wrap_pi(angle: float) -> float:
    """Wrap an angle to the principal interval [-pi, pi)."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped < 0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def with_time(state: PendulumState, t: float) -> PendulumState:
    """Copy of state with the clock rebased (used when attaching to a rig)."""
    return replace(state, t=t)
