"""Fully connected Q-network in numpy with a hand-written backward pass.

Layout: input N -> relu(hidden) -> relu(hidden) -> linear N. Parameters are
float64. States are row vectors; a batch is an ``(B, N)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class TrainingDiverged(FloatingPointError):
    pass


class QNetwork:
    def __init__(self, params: dict[str, np.ndarray]):
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_NAMES}
        n_in, h1 = self.params["W1"].shape
        h1b, h2 = self.params["W2"].shape
        h2b, n_out = self.params["W3"].shape
        if h1 != h1b or h2 != h2b:
            raise ValueError("inconsistent layer shapes")
        if self.params["b1"].shape != (h1,) or self.params["b2"].shape != (h2,) or self.params["b3"].shape != (n_out,):
            raise ValueError("bias shapes do not match layers")
        self.n_in, self.n_out = n_in, n_out

    @classmethod
    def init(
        cls, n: int, rng: np.random.Generator, hidden: Sequence[int] = (512, 512)
    ) -> "QNetwork":
        """He-style uniform init, weights in +-sqrt(6 / fan_in), zero biases."""
        sizes = [n, *hidden, n]
        params = {}
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), 1):
            bound = np.sqrt(6.0 / fan_in)
            params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params[f"b{k}"] = np.zeros(fan_out)
        return cls(params)

    @classmethod
    def zeros(cls, n: int, hidden: Sequence[int] = (512, 512)) -> "QNetwork":
        sizes = [n, *hidden, n]
        params = {}
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), 1):
            params[f"W{k}"] = np.zeros((a, b))
            params[f"b{k}"] = np.zeros(b)
        return cls(params)

    def copy(self) -> "QNetwork":
        return QNetwork({k: v.copy() for k, v in self.params.items()})

    def load_from(self, other: "QNetwork") -> None:
        for k in PARAM_NAMES:
            self.params[k][...] = other.params[k]

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values())

    def _forward(self, x: np.ndarray):
        p = self.params
        z1 = x @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ p["W2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        return a2 @ p["W3"] + p["b3"], (x, z1, a1, z2, a2)

    def forward(self, states: np.ndarray) -> np.ndarray:
        x = np.asarray(states, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"state has dimension {x.shape[-1]}, network expects {self.n_in}")
        return self._forward(x)[0]

    __call__ = forward

    def backward(self, dq: np.ndarray, cache) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dq * Q)`` for a batch forward pass ``cache``."""
        p = self.params
        x, z1, a1, z2, a2 = cache
        grads = {"W3": a2.T @ dq, "b3": dq.sum(axis=0)}
        dz2 = (dq @ p["W3"].T) * (z2 > 0)
        grads["W2"] = a1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["W2"].T) * (z1 > 0)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


def td_targets(target_net: QNetwork, batch: Sequence[Transition], gamma: float) -> np.ndarray:
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    next_states = np.stack([t.next_state for t in batch]).astype(np.float64)
    bootstrap = target_net.forward(next_states).max(axis=1)
    return rewards + gamma * np.where(terminal, 0.0, bootstrap)


def td_loss_and_grads(
    net: QNetwork, target_net: QNetwork, batch: Sequence[Transition], gamma: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared TD error over the batch and its gradient w.r.t. ``net``.
    Targets are treated as constants."""
    if not batch:
        raise ValueError("empty batch")
    y = td_targets(target_net, batch, gamma)
    states = np.stack([t.state for t in batch]).astype(np.float64)
    actions = np.array([t.action for t in batch], dtype=np.int64)
    q, cache = net._forward(states)
    rows = np.arange(len(batch))
    err = q[rows, actions] - y
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(err**2))
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / len(batch)
    return loss, net.backward(dq, cache)


def train_step(net: QNetwork, target_net: QNetwork, batch: Sequence[Transition], gamma: float, lr: float) -> float:
    """One plain SGD step on the TD loss. Returns the loss before the step."""
    loss, grads = td_loss_and_grads(net, target_net, batch, gamma)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite TD loss {loss}")
    for k, g in grads.items():
        net.params[k] -= lr * g
    if not net.is_finite():
        raise TrainingDiverged(f"non-finite parameters after update (loss was {loss})")
    return loss
