"""Dense feedforward networks with exact gradients.

A network is a chain of layers ``h <- act(A h + b)``. Parameters are kept as a
list of (A, b) pairs and can be flattened to a single vector in the order
``A_0 (row-major), b_0, A_1, b_1, ...`` for the quasi-Newton optimizer.

``forward`` accepts a single vector or a batch (one sample per row). For a
batch, ``backward`` returns the parameter gradient summed over rows and one
input gradient per row.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Activation(str, enum.Enum):
    TANH = "tanh"
    LINEAR = "linear"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.TANH:
            return np.tanh(x)
        return x

    def derivative_from_output(self, y: np.ndarray) -> np.ndarray:
        if self is Activation.TANH:
            return 1.0 - y * y
        return np.ones_like(y)


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if int(self.in_dim) < 1 or int(self.out_dim) < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def n_params(self) -> int:
        return self.out_dim * (self.in_dim + 1)


def chain_specs(dims: Sequence[int], activations: Sequence[Activation | str]) -> list[LayerSpec]:
    """Layer specs for ``dims[0] -> dims[1] -> ...`` with one activation per layer."""
    if len(activations) != len(dims) - 1:
        raise ValueError("need exactly one activation per layer")
    return [LayerSpec(dims[i], dims[i + 1], Activation(a)) for i, a in enumerate(activations)]


def _check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ValueError("a network needs at least one layer")
    for k in range(len(specs) - 1):
        if specs[k].out_dim != specs[k + 1].in_dim:
            raise ValueError(
                f"layer {k} out_dim={specs[k].out_dim} does not match "
                f"layer {k + 1} in_dim={specs[k + 1].in_dim}"
            )


@dataclass
class ForwardCache:
    """Per-layer inputs and outputs of one forward pass."""

    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    batched: bool = False
    net_id: int = 0

    @property
    def output(self) -> np.ndarray:
        out = self.outputs[-1]
        return out if self.batched else out[0]


@dataclass(frozen=True, eq=False)
class FeedforwardNet:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[Activation, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        for w, b in zip(ws, bs):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ValueError(f"bad layer shapes {w.shape} / {b.shape}")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "activations", tuple(Activation(a) for a in self.activations))
        _check_chain(self.specs)

    @property
    def specs(self) -> list[LayerSpec]:
        return [
            LayerSpec(w.shape[1], w.shape[0], a)
            for w, a in zip(self.weights, self.activations)
        ]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_params(self) -> int:
        return sum(s.n_params for s in self.specs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


def forward(net: FeedforwardNet, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != net.in_dim:
        raise ValueError(f"input has shape {x.shape}, network expects {net.in_dim} features")
    cache = ForwardCache(batched=batched, net_id=id(net))
    for w, b, act in zip(net.weights, net.biases, net.activations):
        cache.inputs.append(h)
        h = act(h @ w.T + b)
        cache.outputs.append(h)
    return cache.output, cache


def backward(
    net: FeedforwardNet, cache: ForwardCache, output_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(output_grad * output)`` w.r.t. parameters and input."""
    if cache.net_id != id(net) or len(cache.outputs) != len(net.weights):
        raise ValueError("cache was not produced by this network")
    g = np.asarray(output_grad, dtype=np.float64)
    g = g if cache.batched else g.reshape(1, -1)
    if g.shape != cache.outputs[-1].shape:
        raise ValueError(
            f"output_grad has shape {np.shape(output_grad)}, expected {cache.outputs[-1].shape}"
        )
    grads: list[np.ndarray] = []
    for k in range(len(net.weights) - 1, -1, -1):
        delta = g * net.activations[k].derivative_from_output(cache.outputs[k])
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ cache.inputs[k]).ravel())
        g = delta @ net.weights[k]
    param_grad = np.concatenate(grads[::-1])
    return param_grad, (g if cache.batched else g[0])


def flatten(net: FeedforwardNet) -> np.ndarray:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten(specs: Sequence[LayerSpec], theta: np.ndarray) -> FeedforwardNet:
    specs = list(specs)
    _check_chain(specs)
    theta = np.asarray(theta, dtype=np.float64)
    expected = sum(s.n_params for s in specs)
    if theta.ndim != 1 or theta.size != expected:
        raise ValueError(f"parameter vector has length {theta.size}, expected {expected}")
    weights, biases = [], []
    pos = 0
    for s in specs:
        weights.append(theta[pos:pos + s.in_dim * s.out_dim].reshape(s.out_dim, s.in_dim))
        pos += s.in_dim * s.out_dim
        biases.append(theta[pos:pos + s.out_dim])
        pos += s.out_dim
    return FeedforwardNet(tuple(weights), tuple(biases), tuple(s.activation for s in specs))


def init_random(specs: Sequence[LayerSpec], seed: int, scale: float = 1.0) -> FeedforwardNet:
    """Uniform entries in [-scale/sqrt(in_dim), scale/sqrt(in_dim)] per layer."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    specs = list(specs)
    _check_chain(specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for s in specs:
        bound = scale / np.sqrt(s.in_dim)
        weights.append(rng.uniform(-bound, bound, size=(s.out_dim, s.in_dim)))
        biases.append(rng.uniform(-bound, bound, size=s.out_dim))
    return FeedforwardNet(tuple(weights), tuple(biases), tuple(s.activation for s in specs))


def zeros(specs: Sequence[LayerSpec]) -> FeedforwardNet:
    specs = list(specs)
    return unflatten(specs, np.zeros(sum(s.n_params for s in specs)))
