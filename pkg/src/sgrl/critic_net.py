"""Twin deep critics: plain feedforward Q(s, a) with manual backprop.

State and action are concatenated at the input; hidden layers are
rectified-linear, the output is a single linear unit. Forward passes cache
the per-layer inputs and pre-activations so parameter gradients and the
action gradient (the signal that drives actor training) come from explicit
reverse passes, both checkable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ContractViolation, Rng


@dataclass
class MlpParams:
    """Ordered (w, b) pairs; w is (fan_out, fan_in), b is (fan_out,)."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        if not self.layers:
            raise ContractViolation("MLP needs at least one layer")
        fan_in = self.layers[0][0].shape[1]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ContractViolation(f"layer {i} shapes inconsistent: w {w.shape}, b {b.shape}")
            if w.shape[1] != fan_in:
                raise ContractViolation(f"layer {i} fan_in {w.shape[1]} != expected {fan_in}")
            fan_in = w.shape[0]
        if fan_in != 1:
            raise ContractViolation("critic output dimension must be 1")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    def clone(self) -> "MlpParams":
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"l{i}/w"] = w
            out[f"l{i}/b"] = b
        return out

    def set_named(self, name: str, value: np.ndarray) -> None:
        ref = self.named()[name]
        if ref.shape != value.shape:
            raise ContractViolation(f"parameter {name} shape {value.shape} != {ref.shape}")
        ref[...] = value


@dataclass
class CriticPair:
    q1: MlpParams
    q2: MlpParams

    def clone(self) -> "CriticPair":
        return CriticPair(self.q1.clone(), self.q2.clone())


def init_mlp(rng: Rng, sizes: list[int]) -> MlpParams:
    """Uniform +-1/sqrt(fan_in) init for weights and biases."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, (fan_out, fan_in))
        b = rng.uniform(-bound, bound, fan_out)
        layers.append((w, b))
    return MlpParams(layers)


def init_critic_pair(rng: Rng, obs_dim: int, act_dim: int,
                     hidden_sizes: tuple[int, ...] = (256, 256)) -> CriticPair:
    sizes = [obs_dim + act_dim, *hidden_sizes, 1]
    return CriticPair(init_mlp(rng, sizes), init_mlp(rng, sizes))


def _stack_input(net: MlpParams, state, action) -> tuple[np.ndarray, bool]:
    s = np.atleast_2d(np.asarray(state, dtype=np.float64))
    a = np.atleast_2d(np.asarray(action, dtype=np.float64))
    squeeze = np.ndim(state) == 1
    if s.shape[0] != a.shape[0]:
        raise ContractViolation(f"state/action batch mismatch: {s.shape[0]} vs {a.shape[0]}")
    x = np.concatenate([s, a], axis=1)
    if x.shape[1] != net.in_dim:
        raise ContractViolation(f"critic input dim {x.shape[1]} != {net.in_dim}")
    return x, squeeze


def critic_forward(net: MlpParams, state, action):
    """Q-value plus the activation cache for the reverse pass.

    Scalar q for 1-D inputs, (B,) for batches; cache holds each layer's
    input and pre-activation.
    """
    x, squeeze = _stack_input(net, state, action)
    inputs = []
    pres = []
    h = x
    last = len(net.layers) - 1
    for i, (w, b) in enumerate(net.layers):
        inputs.append(h)
        z = h @ w.T + b
        pres.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    q = h[:, 0]
    cache = (inputs, pres)
    return (float(q[0]) if squeeze else q), cache


def critic_backward_params(net: MlpParams, cache, dL_dq):
    """Gradients of dL_dq * q w.r.t. every (w, b); summed over the batch."""
    inputs, pres = cache
    if len(inputs) != len(net.layers):
        raise ContractViolation("cache does not match network depth")
    B = inputs[0].shape[0]
    g = np.asarray(dL_dq, dtype=np.float64)
    if g.ndim == 0:
        g = np.full(B, float(g))
    if g.shape != (B,):
        raise ContractViolation(f"dL_dq shape {g.shape} incompatible with batch {B}")
    delta = g[:, None]  # (B, 1) at the linear output
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        w, _ = net.layers[i]
        grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w) * (pres[i - 1] > 0.0)
    return grads


def critic_action_grad(net: MlpParams, state, action):
    """dQ/da at (s, a); (N_a,) for 1-D inputs, (B, N_a) for batches."""
    q, grad = _forward_with_action_grad(net, state, action)
    return grad


def _forward_with_action_grad(net: MlpParams, state, action):
    """One pass returning both q and dQ/da (saves a forward in the trainer)."""
    x, squeeze = _stack_input(net, state, action)
    act_dim = x.shape[1] - np.atleast_2d(np.asarray(state, dtype=np.float64)).shape[1]
    pres = []
    h = x
    last = len(net.layers) - 1
    for i, (w, b) in enumerate(net.layers):
        z = h @ w.T + b
        pres.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    q = h[:, 0]
    delta = np.ones((x.shape[0], 1))
    for i in range(len(net.layers) - 1, -1, -1):
        w, _ = net.layers[i]
        delta = delta @ w
        if i > 0:
            delta = delta * (pres[i - 1] > 0.0)
    grad = delta[:, -act_dim:]
    if squeeze:
        return float(q[0]), grad[0]
    return q, grad
