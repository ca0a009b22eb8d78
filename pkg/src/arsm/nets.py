"""Minimal feed-forward networks with hand-written backpropagation.

Layers operate on batch-first float64 arrays.  The deterministic subgraph
(linear maps and leaky rectifiers) is differentiated exactly in reverse mode;
stochastic categorical draws sit outside the graph, and estimators inject
their logit gradients through ``Mlp.backward``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream, as_generator

__all__ = ["LayerSpec", "Linear", "LeakyRelu", "SoftmaxHeads", "Mlp", "Adam", "build_mlp"]


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description used to build an Mlp.

    kind is one of "linear", "leaky_relu", "softmax_heads".  For softmax
    heads, out_dim must equal heads * classes: the layer reshapes the flat
    logit vector into per-head rows for sampling.
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    slope: float = 0.01
    heads: int = 0
    classes: int = 0


class Linear:
    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w
        self.b = b

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng) -> "Linear":
        gen = as_generator(rng)
        scale = np.sqrt(2.0 / in_dim)
        return cls(gen.normal(scale=scale, size=(in_dim, out_dim)), np.zeros(out_dim))

    def forward(self, x):
        return x @ self.w + self.b, x

    def backward(self, gy, cache):
        return gy @ self.w.T, [cache.T @ gy, gy.sum(axis=0)]

    def params(self):
        return [self.w, self.b]


class LeakyRelu:
    def __init__(self, slope: float = 0.01):
        self.slope = slope

    def forward(self, x):
        neg = x < 0
        return np.where(neg, self.slope * x, x), neg

    def backward(self, gy, cache):
        return np.where(cache, self.slope * gy, gy), []

    def params(self):
        return []


class SoftmaxHeads:
    """Reshapes flat logits into (batch, heads, classes) rows for sampling.

    The softmax itself belongs to the sampling side; gradients pass through
    unchanged apart from the reshape.
    """

    def __init__(self, heads: int, classes: int):
        self.heads = heads
        self.classes = classes

    def forward(self, x):
        return x.reshape(x.shape[0], self.heads, self.classes), None

    def backward(self, gy, cache):
        return gy.reshape(gy.shape[0], self.heads * self.classes), []

    def params(self):
        return []


class Mlp:
    def __init__(self, layers: list):
        self.layers = layers

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_cached(self, x: np.ndarray):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, gy: np.ndarray, caches: list):
        """Exact reverse-mode gradients; returns (input grad, per-param grads)."""
        if caches is None or len(caches) != len(self.layers):
            raise RuntimeError("backward needs the cache list from forward_cached")
        param_grads: list[np.ndarray] = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy, grads = layer.backward(gy, cache)
            param_grads = grads + param_grads
        return gy, param_grads

    def grad_zeros(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]


def build_mlp(specs: list[LayerSpec], rng) -> Mlp:
    gen = as_generator(rng)
    layers = []
    for spec in specs:
        if spec.kind == "linear":
            if spec.in_dim <= 0 or spec.out_dim <= 0:
                raise ValueError("linear layer needs positive in_dim/out_dim")
            layers.append(Linear.init(spec.in_dim, spec.out_dim, gen))
        elif spec.kind == "leaky_relu":
            layers.append(LeakyRelu(spec.slope))
        elif spec.kind == "softmax_heads":
            if spec.out_dim != spec.heads * spec.classes:
                raise ValueError("softmax_heads out_dim must equal heads * classes")
            layers.append(SoftmaxHeads(spec.heads, spec.classes))
        else:
            raise ValueError(f"unknown layer kind {spec.kind!r}")
    return Mlp(layers)


@dataclass
class Adam:
    """Adam in ascent form: step() moves parameters uphill along the gradient."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: list[np.ndarray] = field(default_factory=list)
    _v: list[np.ndarray] = field(default_factory=list)
    _t: int = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params):
            raise ValueError("params/grads length mismatch")
        self._t += 1
        bc1 = 1.0 - self.beta1**self._t
        bc2 = 1.0 - self.beta2**self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p += self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
