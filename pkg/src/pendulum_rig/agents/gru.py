"""Episode-prefix sequence encoder: a GRU with fixed random weights.

The recurrence is the standard gated recurrent unit.  Weights are drawn
once and never trained (echo-state style): the recurrent matrices are
rescaled to spectral radius ~0.9 so the hidden state carries a long but
fading memory of the episode so far.  Encoded vectors are therefore
stable over time, which is what lets them be cached in the replay buffer
instead of recomputed per gradient step.
"""

from __future__ import annotations

import numpy as np

DEFAULT_HIDDEN = 32
SPECTRAL_RADIUS = 0.9


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _scaled_recurrent(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    u = rng.normal(0.0, 1.0, size=(n, n))
    eigs = np.linalg.eigvals(u)
    top = float(np.max(np.abs(eigs)))
    return u * (radius / top)


class GruEncoder:
    """Unrolls observations into a fixed-size episode summary.

    ``step`` advances the hidden state; ``encode`` advances it and returns
    the concatenation [h ‖ obs] that agents consume.  ``reset`` zeroes the
    hidden state at episode boundaries.
    """

    def __init__(self, input_dim: int, hidden_dim: int = DEFAULT_HIDDEN, seed: int = 0,
                 spectral_radius: float = SPECTRAL_RADIUS):
        if input_dim < 1 or hidden_dim < 1:
            raise ValueError("dimensions must be positive")
        rng = np.random.default_rng(seed)
        in_scale = 1.0 / np.sqrt(input_dim)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W_z = rng.normal(0.0, in_scale, size=(hidden_dim, input_dim))
        self.W_r = rng.normal(0.0, in_scale, size=(hidden_dim, input_dim))
        self.W_h = rng.normal(0.0, in_scale, size=(hidden_dim, input_dim))
        self.U_z = _scaled_recurrent(rng, hidden_dim, spectral_radius)
        self.U_r = _scaled_recurrent(rng, hidden_dim, spectral_radius)
        self.U_h = _scaled_recurrent(rng, hidden_dim, spectral_radius)
        self.b_z = np.zeros(hidden_dim)
        self.b_r = np.zeros(hidden_dim)
        self.b_h = np.zeros(hidden_dim)
        self.h = np.zeros(hidden_dim)

    @property
    def output_dim(self) -> int:
        return self.hidden_dim + self.input_dim

    def reset(self) -> None:
        self.h = np.zeros(self.hidden_dim)

    def step(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},), got {x.shape}")
        h = self.h
        z = _sigmoid(self.W_z @ x + self.U_z @ h + self.b_z)
        r = _sigmoid(self.W_r @ x + self.U_r @ h + self.b_r)
        h_tilde = np.tanh(self.W_h @ x + self.U_h @ (r * h) + self.b_h)
        self.h = (1.0 - z) * h + z * h_tilde
        return self.h

    def encode(self, obs: np.ndarray) -> np.ndarray:
        h = self.step(obs)
        return np.concatenate([h, np.asarray(obs, dtype=np.float64)])


class IdentityEncoder:
    """Pass-through used by the non-recurrent agents."""

    def __init__(self, input_dim: int):
        self.input_dim = input_dim

    @property
    def output_dim(self) -> int:
        return self.input_dim

    def reset(self) -> None:
        pass

    def encode(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=np.float64)
