"""Dense networks with explicit backprop over a flat parameter vector, Adam, input normaliser."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class MLP:
    """ReLU hidden layers; ``output`` is "tanh" or "linear".

    ``params`` is one flat float64 array; ``W``/``b`` are views into it.
    """

    def __init__(self, sizes: Sequence[int], output: str = "linear",
                 rng: Optional[np.random.Generator] = None, final_scale: float = 1.0):
        if output not in ("tanh", "linear"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.shapes = [(self.sizes[i], self.sizes[i + 1]) for i in range(len(self.sizes) - 1)]
        n = sum(a * b + b for a, b in self.shapes)
        self.params = np.zeros(n)
        self._bind()
        if rng is not None:
            for k, W in enumerate(self.W):
                bound = 1.0 / np.sqrt(W.shape[0])
                W[...] = rng.uniform(-bound, bound, size=W.shape)
                if k == len(self.W) - 1:
                    W *= final_scale

    def _bind(self):
        self.W, self.b = [], []
        off = 0
        for a, b in self.shapes:
            self.W.append(self.params[off: off + a * b].reshape(a, b))
            off += a * b
            self.b.append(self.params[off: off + b])
            off += b

    def __getstate__(self):
        return {"sizes": self.sizes, "output": self.output, "params": self.params}

    def __setstate__(self, state):
        self.sizes = state["sizes"]
        self.output = state["output"]
        self.shapes = [(self.sizes[i], self.sizes[i + 1]) for i in range(len(self.sizes) - 1)]
        self.params = state["params"]
        self._bind()

    def copy(self) -> "MLP":
        new = MLP(self.sizes, self.output)
        new.params[:] = self.params
        return new

    @property
    def n_params(self) -> int:
        return len(self.params)

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        last = len(self.W) - 1
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            if k < last:
                h = np.maximum(z, 0.0)
            else:
                h = np.tanh(z) if self.output == "tanh" else z
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts: list, grad_out: np.ndarray, want_input: bool = False):
        """Gradient of ``sum(grad_out * output)`` w.r.t. params (flat) and optionally the input."""
        grad = np.empty_like(self.params)
        gW, gb = [], []
        off = 0
        for a, b in self.shapes:
            gW.append(grad[off: off + a * b].reshape(a, b))
            off += a * b
            gb.append(grad[off: off + b])
            off += b
        last = len(self.W) - 1
        out = acts[-1]
        delta = grad_out * (1.0 - out * out) if self.output == "tanh" else grad_out
        g_in = None
        for k in range(last, -1, -1):
            gW[k][...] = acts[k].T @ delta
            gb[k][...] = delta.sum(axis=0)
            if k > 0 or want_input:
                g = delta @ self.W[k].T
                if k > 0:
                    delta = g * (acts[k] > 0.0)
                else:
                    g_in = g
        return grad, g_in


class Adam:
    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Normalizer:
    """Running mean/std with a std floor and symmetric clipping."""

    def __init__(self, size: int, eps: float = 1e-2, clip: float = 5.0):
        self.size, self.eps, self.clip = size, eps, clip
        self.sum = np.zeros(size)
        self.sumsq = np.zeros(size)
        self.count = 0
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x: np.ndarray) -> None:
        x = x.reshape(-1, self.size)
        self.sum += x.sum(axis=0)
        self.sumsq += (x * x).sum(axis=0)
        self.count += len(x)
        self.recompute()

    def recompute(self) -> None:
        if self.count:
            self.mean = self.sum / self.count
            var = np.maximum(self.sumsq / self.count - self.mean ** 2, self.eps ** 2)
            self.std = np.sqrt(var)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)

    def state(self) -> tuple:
        return self.sum.copy(), self.sumsq.copy(), self.count

    def add_increment(self, before: tuple, after: tuple) -> None:
        self.sum += after[0] - before[0]
        self.sumsq += after[1] - before[1]
        self.count += after[2] - before[2]
        self.recompute()

    def load(self, state: tuple) -> None:
        self.sum, self.sumsq, self.count = state[0].copy(), state[1].copy(), state[2]
        self.recompute()
