"""Minimal dense neural-network substrate for the learning agents.

Two-hidden-layer tanh perceptrons with hand-written reverse-mode
gradients and Adam updates, all in float64 numpy.  Parameters snapshot
to a flat binary layout (layer order, matrices row-major, biases after
their matrix, 64-bit little-endian floats) for checkpointing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_SIZES = (64, 64)


class Mlp:
    """input -> hidden tanh layers -> linear output.

    Weights start uniform on (-1, 1) scaled by 1/sqrt(fan_in), biases at
    zero; pass a seeded generator for reproducible initialisation.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = HIDDEN_SIZES,
    ):
        sizes = (in_dim, *hidden, out_dim)
        self.weights = [
            rng.uniform(-1.0, 1.0, size=(m, n)) / np.sqrt(m)
            for m, n in zip(sizes[:-1], sizes[1:])
        ]
        self.biases = [np.zeros(n) for n in sizes[1:]]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Weight and bias arrays in layer order (mutated in place by training)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def forward(net: Mlp, inputs: np.ndarray) -> np.ndarray:
    """Deterministic affine/tanh composition; accepts a vector or a batch."""
    x = np.asarray(inputs, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input width {x.shape[1]} != network input {net.in_dim}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h[0] if squeeze else h


def backward(
    net: Mlp, inputs: np.ndarray, output_gradient: np.ndarray
) -> list[np.ndarray]:
    """Parameter gradients of sum(output * output_gradient).

    Recomputes the forward activations, then runs reverse mode.  Returns
    gradients aligned with net.parameters().
    """
    x = np.asarray(inputs, dtype=float)
    g = np.asarray(output_gradient, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
        g = g[None, :]

    activations = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
        activations.append(h)

    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    delta = g
    for i in range(last, -1, -1):
        if i < last:
            delta = delta * (1.0 - activations[i + 1] ** 2)  # tanh'
        grads[2 * i] = activations[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 1e-4):
        return cls(
            learning_rate=learning_rate,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray], gradients: list[np.ndarray], state: AdamState
) -> None:
    """One bias-corrected Adam update, applied to the params in place."""
    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, gradients, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / correction1) / (
            np.sqrt(v / correction2) + state.eps
        )


def params_to_bytes(params: list[np.ndarray]) -> bytes:
    """Flatten parameters to the documented binary layout."""
    return b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in params)


def params_from_bytes(data: bytes, template: list[np.ndarray]) -> list[np.ndarray]:
    """Parse a snapshot produced by params_to_bytes, shaped like template."""
    total = sum(p.size for p in template)
    flat = np.frombuffer(data, dtype="<f8")
    if flat.size != total:
        raise ValueError(f"snapshot holds {flat.size} values, expected {total}")
    out = []
    cursor = 0
    for p in template:
        out.append(flat[cursor:cursor + p.size].reshape(p.shape).astype(float))
        cursor += p.size
    return out


def load_params(params: list[np.ndarray], values: list[np.ndarray]) -> None:
    """Copy values into an existing parameter list, in place."""
    if len(params) != len(values):
        raise ValueError("parameter count mismatch")
    for p, v in zip(params, values):
        if p.shape != v.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {v.shape}")
        p[...] = v
