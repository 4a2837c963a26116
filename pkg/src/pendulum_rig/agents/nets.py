"""Dense networks with hand-rolled reverse-mode gradients and Adam.

Everything is plain numpy in float64: forward passes cache activations,
``backward`` walks them in reverse and also returns the gradient with
respect to the input (needed to push critic gradients into an actor).
Layer sizes are arbitrary; hidden activations are rectifiers, the output
is linear or tanh-squashed.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np


class TrainingDivergence(RuntimeError):
    """Non-finite loss or parameters; carries diagnostic context."""


class MLP:
    """Fully connected net: rectifier hidden layers, linear/tanh output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, out_tanh: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.out_tanh = out_tanh
        self.W: List[np.ndarray] = []
        self.b: List[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.W.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))
        # Small final layer keeps initial outputs near zero, which makes
        # early Q-targets and policy outputs well behaved.
        self.W[-1] *= 0.01

    # -- parameter plumbing ---------------------------------------------

    def params(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for w, b in zip(self.W, self.b):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        expected = self.params()
        if len(params) != len(expected):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(expected, params):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def copy_params(self) -> List[np.ndarray]:
        return [p.copy() for p in self.params()]

    def clone(self) -> "MLP":
        twin = MLP.__new__(MLP)
        twin.sizes = list(self.sizes)
        twin.out_tanh = self.out_tanh
        twin.W = [w.copy() for w in self.W]
        twin.b = [b.copy() for b in self.b]
        return twin

    # -- computation -----------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            z = a @ w + b
            a = np.maximum(z, 0.0) if i < last else z
        return np.tanh(a) if self.out_tanh else a

    def forward_cache(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = []
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            z = a @ w + b
            out = np.maximum(z, 0.0) if i < last else z
            cache.append((a, z))
            a = out
        y = np.tanh(a) if self.out_tanh else a
        cache.append(y)
        return y, cache

    def backward(self, cache: list, dy: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss given dLoss/dOutput.

        Returns (parameter gradients in ``params()`` order, dLoss/dInput).
        No implicit batch averaging: fold 1/B into ``dy``.
        """
        y = cache[-1]
        layers = cache[:-1]
        dz = dy * (1.0 - y * y) if self.out_tanh else np.asarray(dy, dtype=np.float64)
        grads_w: List[np.ndarray] = [np.empty(0)] * len(self.W)
        grads_b: List[np.ndarray] = [np.empty(0)] * len(self.b)
        last = len(self.W) - 1
        for i in range(last, -1, -1):
            a_prev, z = layers[i]
            if i < last:
                dz = dz * (z > 0.0)
            grads_w[i] = a_prev.T @ dz
            grads_b[i] = dz.sum(axis=0)
            dz = dz @ self.W[i].T
        grads: List[np.ndarray] = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        return grads, dz


class Adam:
    """Standard Adam with bias correction, updating parameters in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: MLP, source: MLP, tau: float) -> None:
    """Polyak averaging: target <- (1 - tau) * target + tau * source."""
    for tp, sp in zip(target.params(), source.params()):
        tp *= 1.0 - tau
        tp += tau * sp


def hard_update(target: MLP, source: MLP) -> None:
    target.set_params(source.params())


def huber(delta: np.ndarray, kappa: float = 1.0) -> Tuple[float, np.ndarray]:
    """Mean Huber loss and its derivative with respect to delta."""
    delta = np.asarray(delta, dtype=np.float64)
    abs_d = np.abs(delta)
    quad = np.minimum(abs_d, kappa)
    loss = float(np.mean(0.5 * quad * quad + kappa * (abs_d - quad)))
    grad = np.clip(delta, -kappa, kappa) / delta.size
    return loss, grad


def check_finite(value: float, context: str, **details) -> float:
    if not np.isfinite(value):
        extra = ", ".join(f"{k}={v}" for k, v in details.items())
        raise TrainingDivergence(f"non-finite loss in {context} ({extra})")
    return value


def save_params(path: str, nets: dict, meta: Optional[dict] = None) -> None:
    """Persist named networks (and optional scalar metadata) to one .npz."""
    payload = {}
    for name, net in nets.items():
        payload[f"{name}.sizes"] = np.asarray(net.sizes, dtype=np.int64)
        payload[f"{name}.tanh"] = np.asarray(1 if net.out_tanh else 0)
        for i, (w, b) in enumerate(zip(net.W, net.b)):
            payload[f"{name}.W{i}"] = w
            payload[f"{name}.b{i}"] = b
    for key, value in (meta or {}).items():
        payload[f"meta.{key}"] = np.asarray(value)
    np.savez(path, **payload)


def load_params(path: str) -> Tuple[dict, dict]:
    """Inverse of :func:`save_params`: returns ({name: MLP}, {meta})."""
    data = np.load(path)
    names = {key.split(".", 1)[0] for key in data.files if not key.startswith("meta.")}
    nets = {}
    for name in names:
        sizes = [int(s) for s in data[f"{name}.sizes"]]
        net = MLP.__new__(MLP)
        net.sizes = sizes
        net.out_tanh = bool(int(data[f"{name}.tanh"]))
        net.W = [data[f"{name}.W{i}"].copy() for i in range(len(sizes) - 1)]
        net.b = [data[f"{name}.b{i}"].copy() for i in range(len(sizes) - 1)]
        nets[name] = net
    meta = {key[5:]: data[key] for key in data.files if key.startswith("meta.")}
    return nets, meta
