"""Dense float64 primitives shared by every module.

All numeric state lives in 2-D (or 1-D) numpy float64 arrays. Randomness comes
from `Rng`, a thin wrapper over numpy's PCG64 keyed by a root seed plus a tuple
of integer tags, so every component of a run can own an independent,
reproducible stream (same seed + same tags => bitwise-identical draws).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def ensure_finite(name: str, x) -> np.ndarray:
    arr = as_f64(x)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Checked 2-D matrix product."""
    a = as_f64(a)
    b = as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractViolation(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


class Rng:
    """Deterministic random stream (PCG64 seeded via SeedSequence).

    `derive(*tags)` yields an independent child stream addressed by the tag
    tuple; deriving never consumes draws from the parent. Identical
    (seed, tags) always reproduce the identical stream.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in _key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.key))
        )

    def derive(self, *tags: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(t) for t in tags))

    def random(self, size=None):
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def gauss(self, mean: float, std: float, size=None):
        """Draws from N(mean, std^2); std = 0 returns mean exactly."""
        if not np.isfinite(std) or std < 0.0:
            raise ContractViolation(f"gauss requires std >= 0, got {std}")
        out = self._gen.normal(mean, std, size)
        return float(out) if size is None else out

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


@dataclass
class AdamState:
    """Adam moments for a single parameter array; beta1/beta2/eps use the
    conventional defaults."""

    m: np.ndarray
    v: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float64),
                   v=np.zeros_like(param, dtype=np.float64),
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; mutates `state`, returns the new param."""
    if param.shape != grad.shape or param.shape != state.m.shape or param.shape != state.v.shape:
        raise ContractViolation(
            f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"m {state.m.shape}, v {state.v.shape}")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * np.square(grad)
    m_hat = state.m / (1.0 - b1 ** state.step_count)
    v_hat = state.v / (1.0 - b2 ** state.step_count)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
