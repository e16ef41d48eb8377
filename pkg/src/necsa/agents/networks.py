"""Fully connected ReLU networks with hand-written backprop, plus Adam."""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["MLP", "Adam"]


class MLP:
    """Dense net: ReLU on hidden layers, identity or scaled tanh on the output.

    With ``output="tanh"`` the output is ``center + half_range * tanh(z)`` so
    it lies inside ``[low, high]`` up to rounding.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        output: str = "identity",
        low=None,
        high=None,
        dtype=np.float64,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.dtype = dtype
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            self.params.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
        if output == "tanh":
            low = np.full(self.sizes[-1], -1.0) if low is None else np.asarray(low, dtype=np.float64)
            high = np.full(self.sizes[-1], 1.0) if high is None else np.asarray(high, dtype=np.float64)
            self.center = ((high + low) / 2).astype(dtype)
            self.half = ((high - low) / 2).astype(dtype)

    @property
    def names(self) -> list[str]:
        out = []
        for i in range(len(self.params) // 2):
            out += [f"W{i}", f"b{i}"]
        return out

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        return x

    def forward(self, x, keep: bool = False):
        x = self._check(x)
        acts = [x]
        h = x
        n = len(self.params) // 2
        for i in range(n):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n - 1:
                h = np.maximum(z, 0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        y = acts[-1] * self.half + self.center if self.output == "tanh" else acts[-1]
        return (y, acts) if keep else y

    __call__ = forward

    def backward(self, x, upstream, acts=None):
        """Gradients of ``sum(upstream * forward(x))`` w.r.t. parameters and input.

        Returns ``(param_grads, input_grad)``; ReLU uses subgradient 0 at 0.
        """
        if acts is None:
            _, acts = self.forward(x, keep=True)
        g = np.asarray(upstream, dtype=self.dtype)
        n = len(self.params) // 2
        if self.output == "tanh":
            g = g * self.half * (1.0 - acts[-1] ** 2)
        grads: list[np.ndarray] = [None] * len(self.params)
        for i in range(n - 1, -1, -1):
            h_in = acts[i]
            if h_in.ndim == 1:
                grads[2 * i] = np.outer(h_in, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = h_in.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * (acts[i] > 0)
        return grads, g

    def copy(self) -> MLP:
        clone = object.__new__(MLP)
        clone.__dict__.update(self.__dict__)
        clone.params = [p.copy() for p in self.params]
        return clone

    def soft_update(self, source: MLP, tau: float) -> None:
        for p, q in zip(self.params, source.params):
            p *= 1.0 - tau
            p += tau * q

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=self.dtype)
        i = 0
        for p in self.params:
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
