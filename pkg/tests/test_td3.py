"""Trainer mechanics: targets, masking, delay gating, soft updates, replay."""

import numpy as np
import pytest

from sgrl.critic_net import MlpParams, critic_forward
from sgrl.spiking_actor import ActorConfig, actor_forward
from sgrl.surrogate import SurrogateSpec
from sgrl.td3 import (ReplayBuffer, Td3Config, Transition, TransitionBatch,
                      actor_update, compute_target, critic_update,
                      select_action, soft_update, td3_init, train_step)
from sgrl.tensor_core import ContractViolation, Rng

TRAP = SurrogateSpec.trapezoidal(0.25, 0.75, vth=0.5)
OBS, ACT = 2, 1
ARCH = ActorConfig(encoder_pop=3, decoder_pop=3, hidden_sizes=(8,), timesteps=3)


def small_state(cfg=None, seed=0):
    cfg = cfg or Td3Config(batch_size=4, warmup_steps=0, buffer_capacity=64)
    state = td3_init(Rng(seed), OBS, ACT, np.ones(ACT), cfg, ARCH, critic_hidden=(8,))
    return state, cfg


def constant_critic(value: float, in_dim: int) -> MlpParams:
    return MlpParams([(np.zeros((1, in_dim)), np.array([value]))])


def batch_of(n, rng_seed=0, r=0.0, done=0.0):
    rng = Rng(rng_seed)
    return TransitionBatch(
        s=rng.uniform(-1.0, 1.0, (n, OBS)),
        a=rng.uniform(-1.0, 1.0, (n, ACT)),
        r=np.full(n, r),
        s_next=rng.uniform(-1.0, 1.0, (n, OBS)),
        done=np.full(n, done),
    )


class TestReplayBuffer:
    def tr(self, tag: float) -> Transition:
        return Transition(np.full(OBS, tag), np.full(ACT, tag), tag,
                          np.full(OBS, tag), False)

    def test_eviction_is_oldest_first(self):
        buf = ReplayBuffer(3, OBS, ACT)
        for tag in range(5):
            buf.push(self.tr(float(tag)))
        assert len(buf) == 3
        assert [t.r for t in buf.transitions()] == [2.0, 3.0, 4.0]

    def test_partial_fill_order(self):
        buf = ReplayBuffer(8, OBS, ACT)
        for tag in range(3):
            buf.push(self.tr(float(tag)))
        assert [t.r for t in buf.transitions()] == [0.0, 1.0, 2.0]

    def test_sample_with_replacement_from_single_item(self):
        buf = ReplayBuffer(4, OBS, ACT)
        buf.push(self.tr(7.0))
        batch = buf.sample(Rng(0), 5)
        assert len(batch) == 5
        assert np.all(batch.r == 7.0)

    def test_sample_deterministic(self):
        buf = ReplayBuffer(16, OBS, ACT)
        for tag in range(10):
            buf.push(self.tr(float(tag)))
        b1 = buf.sample(Rng(3), 6)
        b2 = buf.sample(Rng(3), 6)
        assert np.array_equal(b1.r, b2.r)

    def test_empty_sample_rejected(self):
        with pytest.raises(ContractViolation):
            ReplayBuffer(4, OBS, ACT).sample(Rng(0), 1)

    def test_done_flag_round_trip(self):
        buf = ReplayBuffer(2, OBS, ACT)
        buf.push(Transition(np.zeros(OBS), np.zeros(ACT), 0.0, np.zeros(OBS), True))
        assert buf.transitions()[0].done is True


class TestComputeTarget:
    def rig(self, gamma=0.99, noise_std=0.0):
        cfg = Td3Config(gamma=gamma, target_noise_std=noise_std, batch_size=4,
                        warmup_steps=0)
        state, _ = small_state(cfg)
        state.critics_target.q1 = constant_critic(3.0, OBS + ACT)
        state.critics_target.q2 = constant_critic(5.0, OBS + ACT)
        return state, cfg

    def test_min_rule_arithmetic(self):
        # y = r + gamma * min(3, 5) = 0.99 * 3 = 2.97
        state, cfg = self.rig()
        y = compute_target(state, cfg, batch_of(4), Rng(0))
        assert np.allclose(y, 2.97, atol=1e-15)

    def test_terminal_masking(self):
        state, cfg = self.rig()
        y = compute_target(state, cfg, batch_of(4, r=1.5, done=1.0), Rng(0))
        assert np.all(y == 1.5)

    def test_gamma_zero(self):
        state, cfg = self.rig(gamma=1e-12)
        y = compute_target(state, cfg, batch_of(4, r=2.0), Rng(0))
        assert np.allclose(y, 2.0, atol=1e-10)

    def test_min_rule_bound_on_random_nets(self):
        state, _ = small_state()
        cfg = Td3Config(batch_size=4, warmup_steps=0, target_noise_std=0.0)
        batch = batch_of(6, rng_seed=5)
        a_next, _ = actor_forward(state.actor_target, batch.s_next, need_trace=False)
        q1, _ = critic_forward(state.critics_target.q1, batch.s_next, a_next)
        q2, _ = critic_forward(state.critics_target.q2, batch.s_next, a_next)
        y = compute_target(state, cfg, batch, Rng(0))
        assert np.all(y <= batch.r + cfg.gamma * q1 + 1e-12)
        assert np.all(y <= batch.r + cfg.gamma * q2 + 1e-12)

    def test_smoothing_noise_is_clipped(self):
        cfg = Td3Config(target_noise_std=50.0, target_noise_clip=0.1,
                        batch_size=4, warmup_steps=0)
        state, _ = small_state(cfg)
        # pin the target policy at 0 so the only spread is the clipped noise
        state.actor_target.decoder.wa[...] = 0.0
        state.actor_target.decoder.ba[...] = 0.0
        probe = constant_critic(0.0, OBS + ACT)
        probe.layers[0][0][0, OBS:] = 1.0  # q = a, exposes the smoothed action
        state.critics_target.q1 = probe
        state.critics_target.q2 = probe
        y = compute_target(state, cfg, batch_of(16), Rng(1))
        a_seen = y / cfg.gamma
        assert np.all(np.abs(a_seen) <= 0.1 + 1e-12)
        assert np.any(np.abs(a_seen) > 1e-3)  # noise actually applied


class TestSoftUpdate:
    def test_tau_zero_is_identity(self):
        state, _ = small_state()
        before = {k: v.copy() for k, v in state.critics_target.q1.named().items()}
        soft_update(state.critics.q1, state.critics_target.q1, 0.0)
        for k, v in state.critics_target.q1.named().items():
            assert np.array_equal(v, before[k])

    def test_tau_one_copies_live(self):
        state, _ = small_state()
        soft_update(state.critics.q1, state.critics_target.q1, 1.0)
        for k, v in state.critics_target.q1.named().items():
            assert np.array_equal(v, state.critics.q1.named()[k])

    def test_tau_0005_arithmetic(self):
        live = constant_critic(1.0, 3)
        target = constant_critic(0.0, 3)
        soft_update(live, target, 0.005)
        assert target.layers[0][1][0] == 0.005

    def test_mixing_stays_between_endpoints(self):
        state, _ = small_state()
        live = state.actor.named()
        before = {k: v.copy() for k, v in state.actor_target.named().items()}
        soft_update(state.actor, state.actor_target, 0.3)
        for k, v in state.actor_target.named().items():
            lo = np.minimum(live[k], before[k])
            hi = np.maximum(live[k], before[k])
            assert np.all(v >= lo - 1e-15) and np.all(v <= hi + 1e-15)

    def test_invalid_tau(self):
        state, _ = small_state()
        with pytest.raises(ContractViolation):
            soft_update(state.actor, state.actor_target, 1.5)


class TestInit:
    def test_targets_start_as_exact_copies(self):
        state, _ = small_state()
        for k, v in state.actor.named().items():
            assert np.array_equal(v, state.actor_target.named()[k])
        for k, v in state.critics.q1.named().items():
            assert np.array_equal(v, state.critics_target.q1.named()[k])

    def test_targets_are_separate_storage(self):
        state, _ = small_state()
        state.actor.decoder.ba[...] = 123.0
        assert not np.array_equal(state.actor.decoder.ba, state.actor_target.decoder.ba)

    def test_optimizer_coverage_and_rates(self):
        cfg = Td3Config(actor_lr=1e-4, critic_lr=1e-3, batch_size=4, warmup_steps=0)
        state, _ = small_state(cfg)
        for name in state.actor.named():
            assert state.optimizers[f"actor/{name}"].lr == 1e-4
        for name in state.critics.q1.named():
            assert state.optimizers[f"q1/{name}"].lr == 1e-3
            assert state.optimizers[f"q2/{name}"].lr == 1e-3

    def test_config_validation(self):
        with pytest.raises(ContractViolation):
            Td3Config(gamma=0.0)
        with pytest.raises(ContractViolation):
            Td3Config(tau=0.0)
        with pytest.raises(ContractViolation):
            Td3Config(policy_delay=0)
        with pytest.raises(ContractViolation):
            Td3Config(target_noise_std=-0.1)


class TestSelectAction:
    def test_greedy_is_deterministic(self):
        state, cfg = small_state()
        obs = np.array([0.2, -0.3])
        a1 = select_action(state, cfg, obs, Rng(0), explore=False)
        a2 = select_action(state, cfg, obs, Rng(1), explore=False)
        assert np.array_equal(a1, a2)

    def test_exploration_clamps_to_bounds(self):
        cfg = Td3Config(exploration_noise_std=100.0, batch_size=4, warmup_steps=0)
        state, _ = small_state(cfg)
        rng = Rng(5)
        for _ in range(20):
            a = select_action(state, cfg, np.array([0.0, 0.0]), rng, explore=True)
            assert np.all(np.abs(a) <= 1.0)

    def test_exploration_noise_changes_action(self):
        state, cfg = small_state()
        obs = np.array([0.1, 0.1])
        greedy = select_action(state, cfg, obs, Rng(0), explore=False)
        noisy = select_action(state, cfg, obs, Rng(0), explore=True)
        assert not np.array_equal(greedy, noisy)


class TestTrainStep:
    def filled_state(self, cfg=None, seed=0, n=32):
        state, cfg = small_state(cfg, seed)
        rng = Rng(99)
        for _ in range(n):
            state.buffer.push(Transition(rng.uniform(-1, 1, OBS), rng.uniform(-1, 1, ACT),
                                         float(rng.uniform(-1, 0)), rng.uniform(-1, 1, OBS),
                                         False))
        return state, cfg

    def test_not_ready_returns_none_without_mutation(self):
        state, cfg = small_state(Td3Config(batch_size=100, warmup_steps=0))
        state.buffer.push(Transition(np.zeros(OBS), np.zeros(ACT), 0.0, np.zeros(OBS), False))
        before = {k: v.copy() for k, v in state.actor.named().items()}
        assert train_step(state, cfg, TRAP, Rng(0)) is None
        assert state.update_count == 0
        for k, v in state.actor.named().items():
            assert np.array_equal(v, before[k])

    def test_policy_delay_gates_actor(self):
        cfg = Td3Config(batch_size=4, warmup_steps=0, policy_delay=2)
        state, _ = self.filled_state(cfg)
        rng = Rng(1)
        actor_before = {k: v.copy() for k, v in state.actor.named().items()}
        m1 = train_step(state, cfg, TRAP, rng)
        assert m1.update_count == 1 and m1.mean_q is None
        for k, v in state.actor.named().items():
            assert np.array_equal(v, actor_before[k])  # no actor move yet
        m2 = train_step(state, cfg, TRAP, rng)
        assert m2.update_count == 2 and m2.mean_q is not None
        moved = any(not np.array_equal(v, actor_before[k])
                    for k, v in state.actor.named().items())
        assert moved

    def test_actor_update_outside_gate_rejected(self):
        cfg = Td3Config(batch_size=4, warmup_steps=0, policy_delay=2)
        state, _ = self.filled_state(cfg)
        train_step(state, cfg, TRAP, Rng(1))  # update_count now 1
        with pytest.raises(ContractViolation):
            actor_update(state, cfg, batch_of(4), TRAP)

    def test_critic_update_reduces_residual_on_fixed_target(self):
        state, cfg = self.filled_state()
        batch = state.buffer.sample(Rng(2), cfg.batch_size)
        y = compute_target(state, cfg, batch, Rng(3))
        l_first, _ = critic_update(state, cfg, batch, y)
        for _ in range(30):
            l_last, _ = critic_update(state, cfg, batch, y)
        assert l_last < l_first

    def test_actor_ascends_linear_critic(self):
        cfg = Td3Config(batch_size=8, warmup_steps=0, actor_lr=1e-2, policy_delay=1)
        state, _ = self.filled_state(cfg)
        ramp = constant_critic(0.0, OBS + ACT)
        ramp.layers[0][0][0, OBS:] = 1.0  # q = a
        state.critics.q1 = ramp
        batch = state.buffer.sample(Rng(7), cfg.batch_size)
        state.update_count = cfg.policy_delay  # open the gate
        q_before = actor_update(state, cfg, batch, TRAP)
        a_after, _ = actor_forward(state.actor, batch.s, need_trace=False)
        q_after = float(np.mean(a_after))
        assert q_after > q_before

    def test_soft_updates_move_targets_at_delay_steps(self):
        cfg = Td3Config(batch_size=4, warmup_steps=0, policy_delay=1, tau=0.5)
        state, _ = self.filled_state(cfg)
        target_before = {k: v.copy() for k, v in state.critics_target.q1.named().items()}
        train_step(state, cfg, TRAP, Rng(1))
        changed = any(not np.array_equal(v, target_before[k])
                      for k, v in state.critics_target.q1.named().items())
        assert changed

    def test_full_loop_determinism(self):
        def run():
            state, cfg = self.filled_state(Td3Config(batch_size=4, warmup_steps=0))
            rng = Rng(11)
            for _ in range(20):
                train_step(state, cfg, TRAP, rng)
            return state.actor.encoder.mu.copy(), state.critics.q1.layers[0][0].copy()

        mu1, w1 = run()
        mu2, w2 = run()
        assert np.array_equal(mu1, mu2)
        assert np.array_equal(w1, w2)
