"""Built-in continuous-control environments behind one step/reset contract.

Both are pure value-semantic state machines: step(state, action) depends on
nothing but its arguments, so replaying a trajectory reproduces it bitwise.
Episodes end only at the step limit; there are no failure terminals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ContractViolation, Rng, ensure_finite

TWO_PI = 2.0 * np.pi


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = theta - TWO_PI * np.floor((theta + np.pi) / TWO_PI)
    if w <= -np.pi:
        w += TWO_PI
    return float(w)


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_dim: int
    action_bound: np.ndarray       # (action_dim,), all > 0
    max_episode_steps: int
    obs_offset: np.ndarray         # per-dim shift applied before scaling
    obs_scale: np.ndarray          # per-dim factor mapping nominal range into [-1, 1]

    def __post_init__(self):
        if np.any(np.asarray(self.action_bound) <= 0.0):
            raise ContractViolation("action bounds must be > 0")
        if self.max_episode_steps < 1:
            raise ContractViolation("max_episode_steps must be >= 1")


@dataclass
class PendulumState:
    theta: float       # wrapped to (-pi, pi]; 0 is upright
    theta_dot: float   # clamped to [-8, 8]
    t: int = 0


@dataclass
class ReachState:
    x: float
    t: int = 0


class Pendulum:
    """Torque-limited swing-up of a uniform rod pivoting at one end.

    Dynamics use g=10, m=1, l=1, dt=0.05 with semi-implicit Euler, so
    theta_dd = 15 sin(theta) + 3 u with torque clamped to [-2, 2]. Reward is
    -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2) evaluated at the pre-step
    state, maximal (zero) when balanced upright with no effort.
    """

    G = 10.0
    M = 1.0
    L = 1.0
    DT = 0.05
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0

    def __init__(self):
        self.spec = EnvSpec(
            obs_dim=3,
            action_dim=1,
            action_bound=np.array([self.MAX_TORQUE]),
            max_episode_steps=200,
            obs_offset=np.zeros(3),
            obs_scale=np.array([1.0, 1.0, 1.0 / self.MAX_SPEED]),
        )

    def reset(self, rng: Rng) -> tuple[PendulumState, np.ndarray]:
        theta = float(rng.uniform(-np.pi, np.pi))
        theta_dot = float(rng.uniform(-1.0, 1.0))
        state = PendulumState(wrap_angle(theta), theta_dot, t=0)
        return state, self.observe(state)

    def observe(self, state: PendulumState) -> np.ndarray:
        raw = np.array([np.cos(state.theta), np.sin(state.theta), state.theta_dot])
        return (raw - self.spec.obs_offset) * self.spec.obs_scale

    def step(self, state: PendulumState, action) -> tuple[PendulumState, np.ndarray, float, bool]:
        ensure_finite("action", np.asarray(action, dtype=np.float64))
        u = float(np.clip(np.asarray(action).reshape(-1)[0], -self.MAX_TORQUE, self.MAX_TORQUE))
        th, thd = state.theta, state.theta_dot
        reward = -(wrap_angle(th) ** 2 + 0.1 * thd ** 2 + 0.001 * u ** 2)
        theta_dd = (3.0 * self.G / (2.0 * self.L)) * np.sin(th) + (3.0 / (self.M * self.L ** 2)) * u
        thd_new = float(np.clip(thd + theta_dd * self.DT, -self.MAX_SPEED, self.MAX_SPEED))
        th_new = wrap_angle(th + thd_new * self.DT)
        nxt = PendulumState(th_new, thd_new, t=state.t + 1)
        done = nxt.t >= self.spec.max_episode_steps
        return nxt, self.observe(nxt), float(reward), done

    def mechanical_energy(self, state: PendulumState) -> float:
        """Kinetic + potential energy of the rod (zero reference at the pivot)."""
        inertia = self.M * self.L ** 2 / 3.0
        kinetic = 0.5 * inertia * state.theta_dot ** 2
        potential = self.M * self.G * (self.L / 2.0) * np.cos(state.theta)
        return float(kinetic + potential)


class Reach1D:
    """Drive a point on a line to the origin: x' = x + 0.1 u, reward -x'^2."""

    MAX_ACTION = 1.0

    def __init__(self):
        self.spec = EnvSpec(
            obs_dim=1,
            action_dim=1,
            action_bound=np.array([self.MAX_ACTION]),
            max_episode_steps=100,
            obs_offset=np.zeros(1),
            obs_scale=np.ones(1),
        )

    def reset(self, rng: Rng) -> tuple[ReachState, np.ndarray]:
        state = ReachState(float(rng.uniform(-1.0, 1.0)), t=0)
        return state, self.observe(state)

    def observe(self, state: ReachState) -> np.ndarray:
        return (np.array([state.x]) - self.spec.obs_offset) * self.spec.obs_scale

    def step(self, state: ReachState, action) -> tuple[ReachState, np.ndarray, float, bool]:
        ensure_finite("action", np.asarray(action, dtype=np.float64))
        u = float(np.clip(np.asarray(action).reshape(-1)[0], -self.MAX_ACTION, self.MAX_ACTION))
        x_new = state.x + 0.1 * u
        reward = -(x_new ** 2)
        nxt = ReachState(x_new, t=state.t + 1)
        done = nxt.t >= self.spec.max_episode_steps
        return nxt, self.observe(nxt), float(reward), done


ENV_NAMES = ("pendulum", "reach")


def make_env(name: str):
    if name == "pendulum":
        return Pendulum()
    if name == "reach":
        return Reach1D()
    raise ContractViolation(f"unknown environment {name!r}; choose from {ENV_NAMES}")
