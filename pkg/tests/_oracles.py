"""Independent reference implementations used as test oracles.

Everything here is written directly from the governing equations and
definitions, in the plainest possible style and without reusing any
package code, so that agreement between the package and these oracles is
meaningful evidence of correctness rather than a tautology.
"""

from __future__ import annotations

import math
from typing import Callable, List, Sequence, Tuple

import numpy as np


# -- pendulum dynamics ----------------------------------------------------

def pendulum_energy(theta: float, theta_dot: float, L: float = 0.38, g: float = 9.81) -> float:
    """Mechanical energy of the unit point mass with the arm frozen."""
    return 0.5 * L * L * theta_dot * theta_dot + g * L * (1.0 - math.cos(theta))


def reference_pendulum_fixed_arm(
    theta: float,
    theta_dot: float,
    seconds: float,
    L: float = 0.38,
    g: float = 9.81,
    b: float = 0.0,
    dt: float = 1e-6,
) -> Tuple[float, float]:
    """Integrate theta_ddot = -(g/L) sin(theta) - b*theta_dot at tiny steps.

    RK4 at dt four orders of magnitude below the frame size; truncation
    error is far below every tolerance it is used to check.
    """
    steps = int(round(seconds / dt))

    def deriv(th: float, om: float) -> Tuple[float, float]:
        return om, -(g / L) * math.sin(th) - b * om

    for _ in range(steps):
        k1t, k1o = deriv(theta, theta_dot)
        k2t, k2o = deriv(theta + 0.5 * dt * k1t, theta_dot + 0.5 * dt * k1o)
        k3t, k3o = deriv(theta + 0.5 * dt * k2t, theta_dot + 0.5 * dt * k2o)
        k4t, k4o = deriv(theta + dt * k3t, theta_dot + dt * k3o)
        theta += (dt / 6.0) * (k1t + 2 * k2t + 2 * k3t + k4t)
        theta_dot += (dt / 6.0) * (k1o + 2 * k2o + 2 * k3o + k4o)
    return theta, theta_dot


# -- finite markov decision processes ------------------------------------

def value_iteration(
    transitions: Sequence[Sequence[int]],
    rewards: Sequence[Sequence[float]],
    gamma: float,
    iters: int = 10_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Q-value fixed point of a deterministic finite MDP.

    ``transitions[s][a]`` is the successor state, ``rewards[s][a]`` the
    immediate reward.  Returns Q of shape (n_states, n_actions).
    """
    n_s = len(transitions)
    n_a = len(transitions[0])
    q = np.zeros((n_s, n_a))
    for _ in range(iters):
        q_new = np.empty_like(q)
        for s in range(n_s):
            for a in range(n_a):
                s2 = transitions[s][a]
                q_new[s, a] = rewards[s][a] + gamma * np.max(q[s2])
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


# -- gradients ------------------------------------------------------------

def finite_difference_grads(
    loss: Callable[[], float], params: List[np.ndarray], eps: float = 1e-6
) -> List[np.ndarray]:
    """Central-difference gradient of a scalar loss w.r.t. in-place params."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            up = loss()
            p[idx] = orig - eps
            down = loss()
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
            it.iternext()
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest elementwise |a-b| / max(1e-8, |a|, |b|)."""
    denom = np.maximum(1e-8, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


# -- recurrent cell --------------------------------------------------------

def gru_reference_step(
    h: np.ndarray,
    x: np.ndarray,
    W_z: np.ndarray, U_z: np.ndarray, b_z: np.ndarray,
    W_r: np.ndarray, U_r: np.ndarray, b_r: np.ndarray,
    W_h: np.ndarray, U_h: np.ndarray, b_h: np.ndarray,
) -> np.ndarray:
    """One textbook gated-recurrent-unit update."""
    def sig(v: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-v))

    z = sig(W_z @ x + U_z @ h + b_z)
    r = sig(W_r @ x + U_r @ h + b_r)
    h_tilde = np.tanh(W_h @ x + U_h @ (r * h) + b_h)
    return (1.0 - z) * h + z * h_tilde
