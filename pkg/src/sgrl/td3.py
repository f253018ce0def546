"""Twin-delayed deterministic actor-critic loop with the spiking actor.

One train step: sample a uniform batch from the replay ring, regress both
critics onto the smoothed double-Q target, and on every policy_delay-th step
ascend the first critic's Q through the actor's BPTT path and soft-mix all
three target networks. Terminal transitions mask the bootstrap term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic_net import (CriticPair, _forward_with_action_grad,
                         critic_backward_params, critic_forward,
                         init_critic_pair)
from .spiking_actor import (ActorConfig, ActorParams, actor_backward,
                            actor_forward, init_actor_params)
from .surrogate import SurrogateSpec
from .tensor_core import AdamState, ContractViolation, Rng, adam_step, ensure_finite


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class TransitionBatch:
    s: np.ndarray       # (B, N_o)
    a: np.ndarray       # (B, N_a)
    r: np.ndarray       # (B,)
    s_next: np.ndarray  # (B, N_o)
    done: np.ndarray    # (B,) in {0, 1}

    def __len__(self):
        return self.s.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring; insertion beyond capacity evicts the oldest,
    sampling is uniform with replacement over stored items."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ContractViolation("replay capacity must be >= 1")
        self.capacity = capacity
        self._s = np.zeros((capacity, obs_dim))
        self._a = np.zeros((capacity, act_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, obs_dim))
        self._d = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition) -> None:
        i = self.cursor
        self._s[i] = tr.s
        self._a[i] = tr.a
        self._r[i] = tr.r
        self._s2[i] = tr.s_next
        self._d[i] = 1.0 if tr.done else 0.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: Rng, batch_size: int) -> TransitionBatch:
        if self.size < 1:
            raise ContractViolation("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, batch_size)
        return TransitionBatch(self._s[idx], self._a[idx], self._r[idx],
                               self._s2[idx], self._d[idx])

    def transitions(self) -> list[Transition]:
        """Stored items, oldest first (introspection/testing)."""
        if self.size < self.capacity:
            order = range(self.size)
        else:
            order = [(self.cursor + i) % self.capacity for i in range(self.capacity)]
        return [Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]),
                           self._s2[i].copy(), bool(self._d[i])) for i in order]


@dataclass
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    policy_delay: int = 2
    target_noise_std: float = 0.2
    target_noise_clip: float = 0.5
    exploration_noise_std: float = 0.1
    batch_size: int = 100
    warmup_steps: int = 1000
    buffer_capacity: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ContractViolation(f"tau must lie in (0, 1], got {self.tau}")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ContractViolation("learning rates must be > 0")
        if self.policy_delay < 1:
            raise ContractViolation("policy_delay must be >= 1")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        if self.target_noise_std < 0.0 or self.exploration_noise_std < 0.0:
            raise ContractViolation("noise stds must be >= 0")


@dataclass
class StepMetrics:
    critic_loss1: float
    critic_loss2: float
    mean_q: float | None
    update_count: int


@dataclass
class Td3State:
    actor: ActorParams
    actor_target: ActorParams
    critics: CriticPair
    critics_target: CriticPair
    buffer: ReplayBuffer
    optimizers: dict[str, AdamState]
    update_count: int = 0

    @property
    def action_bound(self) -> np.ndarray:
        return self.actor.action_bound


def td3_init(rng: Rng, obs_dim: int, act_dim: int, action_bound, cfg: Td3Config,
             arch: ActorConfig | None = None,
             critic_hidden: tuple[int, ...] = (256, 256)) -> Td3State:
    """Fresh trainer state; targets start as exact copies of the live nets."""
    actor = init_actor_params(rng.derive(0), obs_dim, act_dim, action_bound, arch)
    critics = init_critic_pair(rng.derive(1), obs_dim, act_dim, critic_hidden)
    opts: dict[str, AdamState] = {}
    for name, p in actor.named().items():
        opts[f"actor/{name}"] = AdamState.for_param(p, cfg.actor_lr)
    for prefix, net in (("q1", critics.q1), ("q2", critics.q2)):
        for name, p in net.named().items():
            opts[f"{prefix}/{name}"] = AdamState.for_param(p, cfg.critic_lr)
    return Td3State(actor=actor, actor_target=actor.clone(), critics=critics,
                    critics_target=critics.clone(),
                    buffer=ReplayBuffer(cfg.buffer_capacity, obs_dim, act_dim),
                    optimizers=opts)


def select_action(state: Td3State, cfg: Td3Config, s, rng: Rng, explore: bool) -> np.ndarray:
    """Greedy actor output, plus clamped Gaussian noise when exploring."""
    ensure_finite("state", s)
    a, _ = actor_forward(state.actor, s, need_trace=False)
    if explore:
        a = a + rng.gauss(0.0, cfg.exploration_noise_std, size=a.shape)
        a = np.clip(a, -state.action_bound, state.action_bound)
    return a


def compute_target(state: Td3State, cfg: Td3Config, batch: TransitionBatch,
                   rng: Rng) -> np.ndarray:
    """Smoothed double-Q regression target y per sample."""
    if len(batch) < 1:
        raise ContractViolation("compute_target needs a nonempty batch")
    a_next, _ = actor_forward(state.actor_target, batch.s_next, need_trace=False)
    noise = rng.gauss(0.0, cfg.target_noise_std, size=a_next.shape)
    noise = np.clip(noise, -cfg.target_noise_clip, cfg.target_noise_clip)
    a_next = np.clip(a_next + noise, -state.action_bound, state.action_bound)
    q1, _ = critic_forward(state.critics_target.q1, batch.s_next, a_next)
    q2, _ = critic_forward(state.critics_target.q2, batch.s_next, a_next)
    return batch.r + cfg.gamma * (1.0 - batch.done) * np.minimum(q1, q2)


def critic_update(state: Td3State, cfg: Td3Config, batch: TransitionBatch,
                  targets: np.ndarray) -> tuple[float, float]:
    """One Adam step per critic on mean squared (y - Q); returns pre-update losses."""
    losses = []
    B = len(batch)
    for prefix, net in (("q1", state.critics.q1), ("q2", state.critics.q2)):
        q, cache = critic_forward(net, batch.s, batch.a)
        resid = q - targets
        losses.append(float(np.mean(resid ** 2)))
        grads = critic_backward_params(net, cache, 2.0 * resid / B)
        named_g = {}
        for i, (gw, gb) in enumerate(grads):
            named_g[f"l{i}/w"] = gw
            named_g[f"l{i}/b"] = gb
        for name, p in net.named().items():
            net.set_named(name, adam_step(state.optimizers[f"{prefix}/{name}"], p, named_g[name]))
    return losses[0], losses[1]


def actor_update(state: Td3State, cfg: Td3Config, batch: TransitionBatch,
                 spec: SurrogateSpec) -> float:
    """Ascend Q1 through the actor; returns the pre-update mean Q1."""
    if state.update_count % cfg.policy_delay != 0:
        raise ContractViolation(
            f"actor_update outside the delay gate (update {state.update_count}, delay {cfg.policy_delay})")
    B = len(batch)
    a, trace = actor_forward(state.actor, batch.s)
    q, dq_da = _forward_with_action_grad(state.critics.q1, batch.s, a)
    grads = actor_backward(state.actor, trace, -dq_da / B, spec)
    named_g = grads.named()
    for name, p in state.actor.named().items():
        state.actor.set_named(name, adam_step(state.optimizers[f"actor/{name}"], p, named_g[name]))
    return float(np.mean(q))


def soft_update(live, target, tau: float):
    """target <- tau * live + (1 - tau) * target, parameter-wise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ContractViolation(f"tau must lie in [0, 1], got {tau}")
    live_named = live.named()
    target_named = target.named()
    if live_named.keys() != target_named.keys():
        raise ContractViolation("live/target parameter sets differ")
    for name, lv in live_named.items():
        tv = target_named[name]
        if lv.shape != tv.shape:
            raise ContractViolation(f"soft_update shape mismatch at {name}")
        tv[...] = tau * lv + (1.0 - tau) * tv
    return target


def train_step(state: Td3State, cfg: Td3Config, spec: SurrogateSpec,
               rng: Rng) -> StepMetrics | None:
    """One TD3 update; returns None (no mutation) while the buffer is short."""
    if len(state.buffer) < cfg.batch_size:
        return None
    batch = state.buffer.sample(rng, cfg.batch_size)
    y = compute_target(state, cfg, batch, rng)
    l1, l2 = critic_update(state, cfg, batch, y)
    state.update_count += 1
    mean_q = None
    if state.update_count % cfg.policy_delay == 0:
        mean_q = actor_update(state, cfg, batch, spec)
        soft_update(state.actor, state.actor_target, cfg.tau)
        soft_update(state.critics.q1, state.critics_target.q1, cfg.tau)
        soft_update(state.critics.q2, state.critics_target.q2, cfg.tau)
    return StepMetrics(l1, l2, mean_q, state.update_count)
