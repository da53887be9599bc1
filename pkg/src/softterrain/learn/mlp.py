"""Small fully connected networks with hand-written backprop and Adam."""
from __future__ import annotations

import numpy as np


class Mlp:
    """Dense net, tanh hidden layers, linear output.

    ``weights[i]`` has shape (fan_in, fan_out) so a batch ``x`` of shape (n, fan_in)
    maps as ``x @ W + b``.
    """

    def __init__(self, sizes, rng=None, hidden_gain=np.sqrt(2.0), out_gain=1.0, zero=False):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) <= 0:
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights = []
        self.biases = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else hidden_gain
            W = np.zeros((a, b)) if zero else orthogonal(rng, (a, b), gain)
            self.weights.append(W)
            self.biases.append(np.zeros(b))

    @property
    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def forward(self, x):
        """Returns (output, cache).  Accepts a single vector or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None]
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, expected {self.sizes[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        out = h[0] if single else h
        return out, (acts, single)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Parameter gradients [dW0, db0, dW1, ...] for d(loss)/d(output) = grad_out."""
        acts, single = cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None]
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)  # tanh'
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        k = 0
        for p in self.params:
            n = p.size
            p[...] = flat[k:k + n].reshape(p.shape)
            k += n
        if k != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def copy(self):
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other


def orthogonal(rng, shape, gain=1.0):
    a, b = shape
    m = rng.standard_normal((max(a, b), min(a, b)))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if a < b:
        q = q.T
    return gain * q[:a, :b]


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self):
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}
