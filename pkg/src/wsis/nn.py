"""Small fully connected networks with hand-written backpropagation.

Everything runs in float64 on numpy arrays. Batches are row-major:
an input of shape ``(N, n_in)`` produces ``(N, n_out)``.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError

CHECKPOINT_VERSION = 1
OUTPUT_KINDS = ("identity", "sigmoid", "tanh")


def relu(x):
    return np.maximum(x, 0.0)


class MLP:
    """ReLU network with an identity, sigmoid-scaled or tanh-scaled output layer.

    ``sigmoid`` maps onto ``[lo, hi]``; ``tanh`` maps onto the same interval
    symmetrically about its midpoint. ``bounds`` may be scalars or per-output
    vectors.
    """

    def __init__(self, layer_sizes: Sequence[int], output: str = "identity",
                 bounds: tuple[float, float] = (-1.0, 1.0),
                 rng: Optional[np.random.Generator] = None, final_scale: float = 1.0):
        if len(layer_sizes) < 2 or any(int(n) < 1 for n in layer_sizes):
            raise ConfigError(f"invalid layer sizes {layer_sizes}")
        if output not in OUTPUT_KINDS:
            raise ConfigError(f"unknown output activation {output!r}")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (self.layer_sizes[-1],)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (self.layer_sizes[-1],)).copy()
        if output != "identity" and not np.all(lo < hi):
            raise ConfigError("output bounds need lo < hi")
        self.output = output
        self.bounds = (lo, hi)
        self.version = 0
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        n_layers = len(self.layer_sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            lim = 1.0 / math.sqrt(n_in)
            if i == n_layers - 1:
                lim *= final_scale
            self.weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-lim, lim, size=n_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MLP":
        clone = object.__new__(MLP)
        clone.layer_sizes = self.layer_sizes
        clone.output = self.output
        clone.bounds = self.bounds
        clone.version = 0
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def same_architecture(self, other: "MLP") -> bool:
        return (self.layer_sizes == other.layer_sizes and self.output == other.output
                and np.array_equal(self.bounds[0], other.bounds[0])
                and np.array_equal(self.bounds[1], other.bounds[1]))

    def touch(self):
        """Mark parameters as modified so stale caches are rejected."""
        self.version += 1

    def _activate_output(self, z):
        lo, hi = self.bounds
        if self.output == "identity":
            return z
        if self.output == "sigmoid":
            s = 0.5 * (1.0 + np.tanh(0.5 * z))
            return np.clip(lo + (hi - lo) * s, lo, hi)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return np.clip(mid + half * np.tanh(z), lo, hi)

    def _output_slope(self, z):
        lo, hi = self.bounds
        if self.output == "identity":
            return np.ones_like(z)
        if self.output == "sigmoid":
            s = 0.5 * (1.0 + np.tanh(0.5 * z))
            return (hi - lo) * s * (1.0 - s)
        return 0.5 * (hi - lo) * (1.0 - np.tanh(z) ** 2)

    def forward(self, x):
        """Return ``(output, cache)``; a 1-D input gives a 1-D output."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.n_in:
            raise ContractError(f"expected input width {self.n_in}, got shape {x.shape}")
        inputs, pre = [], []
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            a = relu(z) if i < n_layers - 1 else self._activate_output(z)
        cache = (self.version, single, inputs, pre)
        return (a[0] if single else a), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Reverse pass. Returns ``(param_grads, input_grad)``.

        ``param_grads`` follows the ordering of :attr:`params`; gradients are
        summed over the batch.
        """
        version, single, inputs, pre = cache
        if version != self.version:
            raise ContractError("stale cache: parameters changed since forward()")
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != pre[-1].shape:
            raise ContractError(f"output gradient shape {g.shape} != {pre[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        g = g * self._output_slope(pre[-1])
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (pre[i - 1] > 0)
        return grads, (g[0] if single else g)

    # persistence

    def state_dict(self) -> dict:
        d = {"format_version": np.array(CHECKPOINT_VERSION),
             "layer_sizes": np.array(self.layer_sizes, dtype=np.int64),
             "output": np.array(self.output),
             "bounds": np.stack(self.bounds)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            d[f"W{i}"] = w
            d[f"b{i}"] = b
        return d

    @classmethod
    def from_state_dict(cls, d) -> "MLP":
        if int(d["format_version"]) != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {int(d['format_version'])}")
        net = object.__new__(cls)
        net.layer_sizes = tuple(int(n) for n in d["layer_sizes"])
        net.output = str(d["output"])
        b = np.array(d["bounds"], dtype=float)
        net.bounds = (b[0].copy(), b[1].copy())
        net.version = 0
        n = len(net.layer_sizes) - 1
        net.weights = [np.array(d[f"W{i}"], dtype=float) for i in range(n)]
        net.biases = [np.array(d[f"b{i}"], dtype=float) for i in range(n)]
        for i, w in enumerate(net.weights):
            if w.shape != (net.layer_sizes[i], net.layer_sizes[i + 1]):
                raise ContractError(f"layer {i} weight shape {w.shape} inconsistent")
        return net

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, **self.state_dict())

    @classmethod
    def load(cls, path) -> "MLP":
        with np.load(Path(path), allow_pickle=False) as d:
            return cls.from_state_dict(d)


class Adam:
    """Adaptive-moment optimizer state bound to one network's parameter shapes."""

    def __init__(self, net: MLP, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr < 0:
            raise ConfigError("learning rate must be >= 0")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]

    def step(self, net: MLP, grads: Sequence[np.ndarray], maximize: bool = False) -> None:
        params = net.params
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ContractError("gradient shapes do not match network parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        sign = -1.0 if maximize else 1.0
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = sign * g
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        net.touch()

    def state_dict(self, prefix="") -> dict:
        d = {f"{prefix}t": np.array(self.t), f"{prefix}lr": np.array(self.lr)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            d[f"{prefix}m{i}"] = m
            d[f"{prefix}v{i}"] = v
        return d

    def load_state_dict(self, d, prefix="") -> None:
        self.t = int(d[f"{prefix}t"])
        self.lr = float(d[f"{prefix}lr"])
        self.m = [np.array(d[f"{prefix}m{i}"]) for i in range(len(self.m))]
        self.v = [np.array(d[f"{prefix}v{i}"]) for i in range(len(self.v))]


def apply_gradients(net: MLP, opt: Adam, grads, maximize: bool = False) -> None:
    opt.step(net, grads, maximize=maximize)


def soft_update(target: MLP, source: MLP, tau: float) -> None:
    """Blend ``target`` toward ``source``: ``target <- tau*source + (1-tau)*target``."""
    if not target.same_architecture(source):
        raise ContractError("soft_update needs identical architectures")
    if not 0 < tau <= 1:
        raise ConfigError("tau must lie in (0, 1]")
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s
    target.touch()


def hard_update(target: MLP, source: MLP) -> None:
    if not target.same_architecture(source):
        raise ContractError("hard_update needs identical architectures")
    for t, s in zip(target.params, source.params):
        t[...] = s
    target.touch()
