"""Dense networks with hand-written backward passes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MLP:
    """Fully connected net; ``acts[k]`` is ``"relu"``, ``"tanh"`` or ``None`` after layer ``k``.

    Parameters are the flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``.
    """

    params: list[np.ndarray]
    acts: list[str | None]
    name: str = ""

    @classmethod
    def init(cls, rng: np.random.Generator, sizes: list[int], acts: list[str | None], name: str = "") -> "MLP":
        if len(acts) != len(sizes) - 1:
            raise ValueError("need one activation entry per layer")
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(params, list(acts), name)

    @property
    def sizes(self) -> list[int]:
        return [self.params[0].shape[0]] + [W.shape[1] for W in self.params[::2]]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        cache = []
        h = x
        for k, act in enumerate(self.acts):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            pre = h @ W + b
            cache.append((h, pre))
            if act == "relu":
                h = np.maximum(pre, 0.0)
            elif act == "tanh":
                h = np.tanh(pre)
            else:
                h = pre
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, dout: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        d = dout
        for k in range(len(self.acts) - 1, -1, -1):
            h, pre = cache[k]
            if self.acts[k] == "relu":
                d = d * (pre > 0)
            elif self.acts[k] == "tanh":
                d = d * (1.0 - np.tanh(pre) ** 2)
            grads[2 * k] = h.T @ d
            grads[2 * k + 1] = d.sum(axis=0)
            d = d @ self.params[2 * k].T
        return grads, d

    def finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def copy(self) -> "MLP":
        return MLP([p.copy() for p in self.params], list(self.acts), self.name)


@dataclass
class Momentum:
    """SGD with heavy-ball momentum: ``v ← μ v + grad``, ``p ← p - lr v``."""

    lr: float
    momentum: float
    velocity: list[np.ndarray] = field(default_factory=list)

    def step(self, net: MLP, grads: list[np.ndarray]) -> None:
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in net.params]
        for p, v, g in zip(net.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= self.lr * v
