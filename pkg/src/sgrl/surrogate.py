"""Surrogate gradients for the spike threshold.

The backward pass of a spiking layer replaces the non-differentiable
threshold derivative with a piecewise window z(v) centered on the firing
threshold: a plateau of half-width w1 at height h, linear ramps down to zero
at half-width w2. Rectangular (w1 = w2) and triangular (w1 = 0) windows are
the degenerate corners of the same family. The height is always forced by
the unit-integral constraint h = 1/(w1 + w2), so swapping window shapes never
rescales gradients.

`smoothed_step` is the exact antiderivative of z. Running the actor forward
with it in place of the hard threshold yields a differentiable network whose
true gradient is what backpropagation-through-time computes, which is how the
hand-written backward pass is verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ContractViolation

KINDS = ("rectangular", "triangular", "trapezoidal")

_ALIASES = {
    "rect": "rectangular",
    "rectangular": "rectangular",
    "tri": "triangular",
    "triangular": "triangular",
    "trap": "trapezoidal",
    "trapezoidal": "trapezoidal",
}


def _unit_height(w1: float, w2: float) -> float:
    """Plateau height forcing the window's integral to 1."""
    if not (np.isfinite(w1) and np.isfinite(w2)) or w1 + w2 <= 0.0:
        raise ContractViolation(f"need w1 + w2 > 0, got w1={w1}, w2={w2}")
    return 1.0 / (w1 + w2)


def canonical_kind(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ContractViolation(f"unknown surrogate kind {name!r}, expected one of {KINDS}") from None


@dataclass(frozen=True)
class SurrogateSpec:
    """One member of the window family; build via the classmethods."""

    kind: str
    w1: float  # plateau (upper base) half-width
    w2: float  # support (lower base) half-width
    vth: float  # firing threshold the window is centered on
    h: float  # plateau height, 1/(w1 + w2)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown surrogate kind {self.kind!r}")
        if not (np.isfinite(self.w1) and np.isfinite(self.w2) and np.isfinite(self.vth)):
            raise ContractViolation("surrogate parameters must be finite")
        if self.w2 <= 0.0:
            raise ContractViolation(f"w2 must be > 0, got {self.w2}")
        if not 0.0 <= self.w1 <= self.w2:
            raise ContractViolation(f"need 0 <= w1 <= w2, got w1={self.w1}, w2={self.w2}")

    @classmethod
    def rectangular(cls, width: float, vth: float = 0.5) -> "SurrogateSpec":
        return cls("rectangular", width, width, vth, _unit_height(width, width))

    @classmethod
    def triangular(cls, width: float, vth: float = 0.5) -> "SurrogateSpec":
        return cls("triangular", 0.0, width, vth, _unit_height(0.0, width))

    @classmethod
    def trapezoidal(cls, w1: float, w2: float, vth: float = 0.5) -> "SurrogateSpec":
        return cls("trapezoidal", w1, w2, vth, _unit_height(w1, w2))

    @classmethod
    def make(cls, kind: str, w1: float = 0.25, w2: float = 0.75, vth: float = 0.5) -> "SurrogateSpec":
        """Build any kind from trapezoid-style parameters.

        Rectangular uses w2 as its half-width (w1 ignored); triangular pins
        w1 to 0.
        """
        kind = canonical_kind(kind)
        if kind == "rectangular":
            return cls.rectangular(w2, vth)
        if kind == "triangular":
            return cls.triangular(w2, vth)
        return cls.trapezoidal(w1, w2, vth)


def surrogate_grad(spec: SurrogateSpec, v):
    """Window value z(v); scalar in, scalar out, arrays vectorized.

    Plateau membership is strict (|v - vth| < w1); ties fall into the ramp,
    and for the rectangular window (empty ramp) into the zero branch.
    """
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("surrogate_grad: non-finite membrane value")
    u = np.abs(arr - spec.vth)
    out = np.zeros_like(u)
    out[u < spec.w1] = spec.h
    if spec.w2 > spec.w1:
        ramp = (u >= spec.w1) & (u < spec.w2)
        out[ramp] = spec.h * (1.0 - (u[ramp] - spec.w1) / (spec.w2 - spec.w1))
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out


def smoothed_step(spec: SurrogateSpec, v):
    """Antiderivative S(v) of the window: 0 below the support, 0.5 at the
    threshold, 1 above; S' = surrogate_grad wherever z is continuous."""
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("smoothed_step: non-finite membrane value")
    d = arr - spec.vth
    u = np.abs(d)
    w1, w2, h = spec.w1, spec.w2, spec.h
    # area between the threshold and vth + u (one-sided half integral <= 0.5)
    half = np.empty_like(u)
    plateau = u <= w1
    half[plateau] = h * u[plateau]
    beyond = u >= w2
    half[beyond] = 0.5
    ramp = ~plateau & ~beyond
    if np.any(ramp):
        r = u[ramp] - w1
        half[ramp] = h * (w1 + r - 0.5 * r * r / (w2 - w1))
    out = np.clip(np.where(d >= 0.0, 0.5 + half, 0.5 - half), 0.0, 1.0)
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out
