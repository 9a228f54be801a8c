"""Small fully connected networks with hand-written forward/backward passes."""

from __future__ import annotations

import numpy as np


class NetError(Exception):
    pass


class MLP:
    """Rectifier hidden layers; output head is linear or tanh.

    forward() returns the output and a cache; backward() consumes the cache
    and an upstream gradient and returns exact analytic parameter gradients
    plus the gradient with respect to the input.
    """

    def __init__(self, sizes, output: str = "linear",
                 rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise NetError("need at least input and output sizes")
        if output not in ("linear", "tanh"):
            raise NetError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        rng = rng or np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            bound = 3e-3 if i == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    # -- parameter plumbing

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat_params(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params():
            n = p.size
            p[...] = flat[offset:offset + n].reshape(p.shape)
            offset += n
        if offset != flat.size:
            raise NetError(f"parameter size mismatch: {offset} != {flat.size}")

    def clone(self) -> "MLP":
        other = MLP(self.sizes, self.output)
        other.set_flat_params(self.flat_params())
        return other

    # -- passes

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise NetError(f"input dim {x.shape[1]} != expected {self.sizes[0]}")
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            activations.append(h)
        y = h[0] if squeeze else h
        return y, (activations, squeeze)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. params and input."""
        activations, squeeze = cache
        grad = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            grad = grad[None, :]
        y = activations[-1]
        if self.output == "tanh":
            grad = grad * (1.0 - y * y)
        param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            h_prev = activations[i]
            param_grads[i] = (h_prev.T @ grad, grad.sum(axis=0))
            grad = grad @ self.weights[i].T
            if i > 0:
                grad = grad * (activations[i] > 0.0)
        grad_in = grad[0] if squeeze else grad
        flat = []
        for dw, db in param_grads:
            flat.append(dw)
            flat.append(db)
        return flat, grad_in


class Adam:
    """Per-parameter Adam with bias correction."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def soft_update(target: MLP, online: MLP, tau: float):
    for pt, po in zip(target.params(), online.params()):
        pt *= 1.0 - tau
        pt += tau * po
