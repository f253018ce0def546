"""Population-coded spiking actor.

Forward path: each state dimension excites a group of encoder neurons with
Gaussian receptive fields; the intensities drive deterministic
integrate-and-fire spike trains; the binary trains run through K
leaky-integrate-and-fire layers for T timesteps; output-population spike
counts become firing rates that an affine decoder maps to actions, squashed
to the action bound with tanh.

Backward path: hand-written backpropagation through time over the recorded
trace. The threshold derivative is replaced by the surrogate window, the
refractory gate (1 - o_prev) is treated as a constant, current/voltage decay
chains carry gradient across timesteps, and encoder receptive fields receive
gradient through the per-step intensity with the spike generator treated as
identity in A.

Everything runs batched: a state batch of shape (B, N_o) produces (T, B, n)
trace arrays; single 1-D states are accepted and returned un-batched.
Passing a SurrogateSpec as `soft` to actor_forward swaps the hard threshold
for its smoothed antiderivative (and the encoder for its per-step intensity),
giving a differentiable network whose exact gradient is what actor_backward
computes; finite differences on that network verify the BPTT code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .surrogate import SurrogateSpec, smoothed_step, surrogate_grad
from .tensor_core import ContractViolation, Rng, ensure_finite


@dataclass
class EncoderParams:
    mu: np.ndarray      # (N_o, N_p) receptive-field centers
    sigma: np.ndarray   # (N_o, N_p) receptive-field widths, all > 0
    epsilon: float = 0.5  # spike threshold is 1 - epsilon

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 2:
            raise ContractViolation(f"encoder mu/sigma shapes differ: {self.mu.shape} vs {self.sigma.shape}")
        if np.any(self.sigma <= 0.0):
            raise ContractViolation("encoder sigma entries must be > 0")
        if not 0.0 < 1.0 - self.epsilon <= 1.0:
            raise ContractViolation(f"encoder threshold 1-epsilon must lie in (0, 1], got eps={self.epsilon}")

    @property
    def threshold(self) -> float:
        return 1.0 - self.epsilon

    @property
    def obs_dim(self) -> int:
        return self.mu.shape[0]

    @property
    def pop_dim(self) -> int:
        return self.mu.shape[1]


@dataclass
class LifLayerParams:
    w: np.ndarray   # (fan_out, fan_in)
    b: np.ndarray   # (fan_out,)
    dc: float = 0.5   # current decay
    dv: float = 0.75  # voltage decay
    vth: float = 0.5  # firing threshold

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.w.ndim != 2 or self.b.shape[0] != self.w.shape[0]:
            raise ContractViolation(f"LIF layer shapes inconsistent: w {self.w.shape}, b {self.b.shape}")
        if not (0.0 <= self.dc <= 1.0 and 0.0 <= self.dv <= 1.0):
            raise ContractViolation("decay constants must lie in [0, 1]")
        if self.vth <= 0.0:
            raise ContractViolation("vth must be > 0")

    @property
    def fan_out(self) -> int:
        return self.w.shape[0]

    @property
    def fan_in(self) -> int:
        return self.w.shape[1]


@dataclass
class DecoderParams:
    wa: np.ndarray  # (N_a, N_s); row i decodes action dimension i
    ba: np.ndarray  # (N_a,)

    def __post_init__(self):
        self.wa = np.asarray(self.wa, dtype=np.float64)
        self.ba = np.asarray(self.ba, dtype=np.float64).reshape(-1)
        if self.wa.ndim != 2 or self.ba.shape[0] != self.wa.shape[0]:
            raise ContractViolation(f"decoder shapes inconsistent: wa {self.wa.shape}, ba {self.ba.shape}")

    @property
    def act_dim(self) -> int:
        return self.wa.shape[0]

    @property
    def pop_dim(self) -> int:
        return self.wa.shape[1]


@dataclass
class ActorParams:
    encoder: EncoderParams
    layers: list[LifLayerParams]
    decoder: DecoderParams
    timesteps: int
    action_bound: np.ndarray  # (N_a,)

    def __post_init__(self):
        self.action_bound = np.asarray(self.action_bound, dtype=np.float64).reshape(-1)
        if self.timesteps < 1:
            raise ContractViolation("timesteps must be >= 1")
        if not self.layers:
            raise ContractViolation("actor needs at least one LIF layer")
        n_in = self.encoder.obs_dim * self.encoder.pop_dim
        for i, layer in enumerate(self.layers):
            if layer.fan_in != n_in:
                raise ContractViolation(f"layer {i} fan_in {layer.fan_in} != expected {n_in}")
            n_in = layer.fan_out
        n_out = self.decoder.act_dim * self.decoder.pop_dim
        if n_in != n_out:
            raise ContractViolation(f"last layer fan_out {n_in} != decoder population {n_out}")
        if self.action_bound.shape[0] != self.decoder.act_dim:
            raise ContractViolation("action_bound length must equal the action dimension")
        if np.any(self.action_bound <= 0.0):
            raise ContractViolation("action bounds must be > 0")

    @property
    def obs_dim(self) -> int:
        return self.encoder.obs_dim

    @property
    def act_dim(self) -> int:
        return self.decoder.act_dim

    def clone(self) -> "ActorParams":
        return ActorParams(
            encoder=EncoderParams(self.encoder.mu.copy(), self.encoder.sigma.copy(), self.encoder.epsilon),
            layers=[LifLayerParams(l.w.copy(), l.b.copy(), l.dc, l.dv, l.vth) for l in self.layers],
            decoder=DecoderParams(self.decoder.wa.copy(), self.decoder.ba.copy()),
            timesteps=self.timesteps,
            action_bound=self.action_bound.copy(),
        )

    def named(self) -> dict[str, np.ndarray]:
        """Trainable parameters keyed by stable names (checkpoint/optimizer order)."""
        out = {"mu": self.encoder.mu, "sigma": self.encoder.sigma}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}/w"] = layer.w
            out[f"layer{i}/b"] = layer.b
        out["wa"] = self.decoder.wa
        out["ba"] = self.decoder.ba
        return out

    def set_named(self, name: str, value: np.ndarray) -> None:
        ref = self.named()[name]
        if ref.shape != value.shape:
            raise ContractViolation(f"parameter {name} shape {value.shape} != {ref.shape}")
        ref[...] = value


@dataclass
class ActorConfig:
    """Architecture knobs; defaults follow the population-coded SAN lineage."""

    encoder_pop: int = 10
    decoder_pop: int = 10
    hidden_sizes: tuple[int, ...] = (256, 256)
    timesteps: int = 5
    current_decay: float = 0.5
    voltage_decay: float = 0.75
    vth: float = 0.5
    encoder_epsilon: float = 0.5
    mu_range: tuple[float, float] = (-1.0, 1.0)


def init_actor_params(rng: Rng, obs_dim: int, act_dim: int, action_bound,
                      arch: ActorConfig | None = None) -> ActorParams:
    """Fresh actor: centers tile mu_range evenly, sigma equals the spacing,
    weights and biases uniform +-1/sqrt(fan_in)."""
    arch = arch or ActorConfig()
    lo, hi = arch.mu_range
    if arch.encoder_pop > 1:
        centers = np.linspace(lo, hi, arch.encoder_pop)
        spacing = (hi - lo) / (arch.encoder_pop - 1)
    else:
        centers = np.array([0.5 * (lo + hi)])
        spacing = hi - lo or 1.0
    mu = np.tile(centers, (obs_dim, 1))
    sigma = np.full_like(mu, spacing)
    encoder = EncoderParams(mu, sigma, arch.encoder_epsilon)

    sizes = [obs_dim * arch.encoder_pop, *arch.hidden_sizes, act_dim * arch.decoder_pop]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, (fan_out, fan_in))
        b = rng.uniform(-bound, bound, fan_out)
        layers.append(LifLayerParams(w, b, arch.current_decay, arch.voltage_decay, arch.vth))

    dec_bound = 1.0 / np.sqrt(arch.decoder_pop)
    wa = rng.uniform(-dec_bound, dec_bound, (act_dim, arch.decoder_pop))
    ba = rng.uniform(-dec_bound, dec_bound, act_dim)
    return ActorParams(encoder, layers, DecoderParams(wa, ba), arch.timesteps,
                       np.asarray(action_bound, dtype=np.float64).reshape(-1))


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

@dataclass
class LayerTrace:
    c: np.ndarray       # (T, B, n) input currents
    v: np.ndarray       # (T, B, n) membrane potentials
    o: np.ndarray       # (T, B, n) transmitted spikes (binary, or smoothed values)
    o_hard: np.ndarray  # (T, B, n) binary threshold crossings (refractory gate source)


@dataclass
class ForwardTrace:
    states: np.ndarray          # (B, N_o)
    intensity: np.ndarray       # (B, N_o*N_p) encoder stimulus A
    encoder_spikes: np.ndarray  # (T, B, N_o*N_p)
    layers: list[LayerTrace]
    spike_counts: np.ndarray    # (B, N_a, N_s) accumulated output spikes
    rates: np.ndarray           # (B, N_a, N_s) spike_counts / T
    pre_squash: np.ndarray      # (B, N_a) affine decoder output
    tanh_pre: np.ndarray        # (B, N_a) tanh(pre_squash)
    action: np.ndarray          # (B, N_a) bound * tanh_pre
    smoothed: bool = False

    @property
    def batch(self) -> int:
        return self.states.shape[0]

    @property
    def timesteps(self) -> int:
        return self.encoder_spikes.shape[0]


def encode_intensity(enc: EncoderParams, states) -> np.ndarray:
    """Gaussian receptive-field response A in (0, 1], flattened (i, j) order."""
    s = ensure_finite("state", states)
    squeeze = s.ndim == 1
    s = np.atleast_2d(s)
    if s.shape[1] != enc.obs_dim:
        raise ContractViolation(f"state dim {s.shape[1]} != encoder dim {enc.obs_dim}")
    z = (s[:, :, None] - enc.mu[None]) / enc.sigma[None]
    a = np.exp(-0.5 * z * z).reshape(s.shape[0], -1)
    return a[0] if squeeze else a


def encode_spikes(enc: EncoderParams, intensity, timesteps: int) -> np.ndarray:
    """Deterministic integrate-and-fire train: v += A each step, spike and
    subtract the threshold whenever v exceeds it. Shape (T, ..., N)."""
    a = np.asarray(intensity, dtype=np.float64)
    out = np.empty((timesteps,) + a.shape)
    v = np.zeros_like(a)
    thr = enc.threshold
    for t in range(timesteps):
        v = v + a
        fired = v > thr
        out[t] = fired
        v = v - thr * fired
    return out


def lif_step(layer: LifLayerParams, prev: tuple, in_spikes) -> tuple:
    """One LIF update: decayed current plus synaptic drive, decayed voltage
    gated by the refractory factor, hard threshold spike."""
    c_prev, v_prev, o_prev = (np.asarray(x, dtype=np.float64) for x in prev)
    x = np.asarray(in_spikes, dtype=np.float64)
    if x.shape[-1] != layer.fan_in:
        raise ContractViolation(f"lif_step input dim {x.shape[-1]} != fan_in {layer.fan_in}")
    if c_prev.shape != v_prev.shape or c_prev.shape != o_prev.shape or c_prev.shape[-1] != layer.fan_out:
        raise ContractViolation("lif_step state shapes inconsistent with layer")
    c = layer.dc * c_prev + x @ layer.w.T + layer.b
    v = layer.dv * v_prev * (1.0 - o_prev) + c
    o = (v > layer.vth).astype(np.float64)
    return c, v, o


def actor_forward(params: ActorParams, states, soft: SurrogateSpec | None = None,
                  need_trace: bool = True):
    """Run the actor on a state (N_o,) or batch (B, N_o).

    Returns (action, trace); `trace` is None when need_trace is False. With
    `soft` set, the hard threshold becomes smoothed_step(soft, v) and the
    encoder emits its intensity directly each step; the refractory gate keeps
    using the binary crossing so the network stays exactly differentiable by
    actor_backward.
    """
    s = ensure_finite("state", states)
    squeeze = s.ndim == 1
    s = np.atleast_2d(s)
    B, T = s.shape[0], params.timesteps

    a_int = encode_intensity(params.encoder, s)
    if soft is None:
        enc_spikes = encode_spikes(params.encoder, a_int, T)
    else:
        enc_spikes = np.broadcast_to(a_int, (T, B, a_int.shape[1])).copy()

    layer_traces = []
    x_all = enc_spikes
    for layer in params.layers:
        n = layer.fan_out
        ct = np.empty((T, B, n))
        vt = np.empty((T, B, n))
        ot = np.empty((T, B, n))
        oh = ot if soft is None else np.empty((T, B, n))
        c = np.zeros((B, n))
        v = np.zeros((B, n))
        gate = np.ones((B, n))  # 1 - o_hard from the previous step
        drive = x_all @ layer.w.T + layer.b  # (T, B, n), all timestep synaptic inputs at once
        for t in range(T):
            c = layer.dc * c + drive[t]
            v = layer.dv * v * gate + c
            hard = v > layer.vth
            ct[t] = c
            vt[t] = v
            oh[t] = hard
            if soft is not None:
                ot[t] = smoothed_step(soft, v)
            gate = 1.0 - oh[t]
        layer_traces.append(LayerTrace(ct, vt, ot, oh))
        x_all = ot

    sc = x_all.sum(axis=0).reshape(B, params.act_dim, params.decoder.pop_dim)
    rates = sc / T
    pre = np.einsum("bas,as->ba", rates, params.decoder.wa) + params.decoder.ba
    th = np.tanh(pre)
    action = params.action_bound * th

    trace = None
    if need_trace:
        trace = ForwardTrace(states=s, intensity=a_int, encoder_spikes=enc_spikes,
                             layers=layer_traces, spike_counts=sc, rates=rates,
                             pre_squash=pre, tanh_pre=th, action=action,
                             smoothed=soft is not None)
    return (action[0] if squeeze else action), trace


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

@dataclass
class ActorGrads:
    mu: np.ndarray
    sigma: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]]  # (dW, db) per LIF layer
    wa: np.ndarray
    ba: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        out = {"mu": self.mu, "sigma": self.sigma}
        for i, (gw, gb) in enumerate(self.layers):
            out[f"layer{i}/w"] = gw
            out[f"layer{i}/b"] = gb
        out["wa"] = self.wa
        out["ba"] = self.ba
        return out


def actor_backward(params: ActorParams, trace: ForwardTrace, dL_da,
                   spec: SurrogateSpec) -> ActorGrads:
    """Backpropagation through time over a recorded trace.

    dL_da is the loss gradient at the squashed action, shaped like the
    forward's action output; gradients are summed over the batch. The spike
    derivative is surrogate_grad(spec, v); the refractory gate is constant;
    the decoder path injects W_a^T dL/dpre / T into every timestep of the top
    layer; encoder fields get the per-step-identity intensity gradient.
    """
    g_a = np.atleast_2d(np.asarray(dL_da, dtype=np.float64))
    B, T = trace.batch, trace.timesteps
    if g_a.shape != (B, params.act_dim):
        raise ContractViolation(f"dL_da shape {g_a.shape} != (batch {B}, act {params.act_dim})")
    if T != params.timesteps or len(trace.layers) != len(params.layers):
        raise ContractViolation("trace does not match actor parameters")
    for i, (layer, rec) in enumerate(zip(params.layers, trace.layers)):
        if rec.v.shape != (T, B, layer.w.shape[0]):
            raise ContractViolation(
                f"trace layer {i} shape {rec.v.shape} does not match parameters")
    if trace.intensity.shape != (B, params.encoder.mu.size):
        raise ContractViolation("trace encoder width does not match parameters")

    # tanh squash, then affine decoder
    g_pre = g_a * params.action_bound * (1.0 - trace.tanh_pre ** 2)  # (B, N_a)
    g_wa = np.einsum("ba,bas->as", g_pre, trace.rates)
    g_ba = g_pre.sum(axis=0)
    g_rate = g_pre[:, :, None] * params.decoder.wa[None]             # (B, N_a, N_s)
    g_spike_const = (g_rate / T).reshape(B, -1)                      # dL/do_t^K, same for every t

    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    go = None  # (T, B, n_k) upstream gradient on this layer's spikes
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        lt = trace.layers[k]
        in_spikes = trace.encoder_spikes if k == 0 else trace.layers[k - 1].o
        gw = np.zeros_like(layer.w)
        gb = np.zeros_like(layer.b)
        go_below = np.empty((T, B, layer.fan_in))
        gv_next = None
        gc_next = None
        for t in range(T - 1, -1, -1):
            go_t = g_spike_const if k == len(params.layers) - 1 else go[t]
            gv = go_t * surrogate_grad(spec, lt.v[t])
            if gv_next is not None:
                # v_{t+1} = dv * v_t * (1 - o_hard_t) + c_{t+1}
                gv = gv + gv_next * (layer.dv * (1.0 - lt.o_hard[t]))
            gc = gv if gc_next is None else gv + layer.dc * gc_next
            gw += gc.T @ in_spikes[t]
            gb += gc.sum(axis=0)
            go_below[t] = gc @ layer.w
            gv_next, gc_next = gv, gc
        layer_grads[k] = (gw, gb)
        go = go_below

    # encoder: dL/dA treats the spike generator as identity per step
    g_int = go.sum(axis=0)  # (B, N_enc)
    enc = params.encoder
    a3 = trace.intensity.reshape(B, enc.obs_dim, enc.pop_dim)
    g3 = g_int.reshape(B, enc.obs_dim, enc.pop_dim)
    diff = trace.states[:, :, None] - enc.mu[None]
    sig2 = enc.sigma ** 2
    g_mu = np.einsum("bij,bij->ij", g3, a3 * diff) / sig2
    g_sigma = np.einsum("bij,bij->ij", g3, a3 * diff * diff) / (sig2 * enc.sigma)

    return ActorGrads(mu=g_mu, sigma=g_sigma, layers=layer_grads, wa=g_wa, ba=g_ba)
