"""Binary parameter checkpoints.

Layout: magic b"SGRL", format version u32, then per entry a u32 name byte
length, the UTF-8 name, u64 rows, u64 cols, and the row-major little-endian
f64 payload. Entries are written in sorted name order and round-trip
bit-exactly. On top of the raw dict format sit serializers for actor
parameters (self-describing, enough to rebuild and run the policy) and full
trainer state (four networks, optimizer moments, update counter).
"""

from __future__ import annotations

import struct

import numpy as np

from .spiking_actor import ActorParams, DecoderParams, EncoderParams, LifLayerParams
from .td3 import Td3State
from .tensor_core import ContractViolation

MAGIC = b"SGRL"
VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named 2-D float64 matrices; keys are stored sorted."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.ndim != 2:
            raise ContractViolation(f"entry {name!r} must be 2-D, got shape {arr.shape}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_arrays(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ContractViolation(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ContractViolation(f"{path}: unsupported format version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 8
    total = len(blob)
    while pos < total:
        if pos + 4 > total:
            raise ContractViolation(f"{path}: truncated entry header")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + name_len + 16 > total:
            raise ContractViolation(f"{path}: truncated entry")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        rows, cols = struct.unpack_from("<QQ", blob, pos)
        pos += 16
        nbytes = rows * cols * 8
        if pos + nbytes > total:
            raise ContractViolation(f"{path}: truncated payload for {name!r}")
        flat = np.frombuffer(blob[pos:pos + nbytes], dtype="<f8")
        out[name] = flat.astype(np.float64).reshape(rows, cols)
        pos += nbytes
    return out


def _as_matrix(arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim == 2:
        return a
    raise ContractViolation(f"cannot checkpoint array of shape {a.shape}")


def _scalar(value: float) -> np.ndarray:
    return np.array([[float(value)]])


def save_actor(path, actor: ActorParams) -> None:
    """Self-describing actor checkpoint (parameters plus dynamics constants)."""
    entries: dict[str, np.ndarray] = {
        "meta/epsilon": _scalar(actor.encoder.epsilon),
        "meta/timesteps": _scalar(actor.timesteps),
        "meta/action_bound": _as_matrix(actor.action_bound),
        "meta/layer_count": _scalar(len(actor.layers)),
        "mu": actor.encoder.mu,
        "sigma": actor.encoder.sigma,
        "wa": actor.decoder.wa,
        "ba": _as_matrix(actor.decoder.ba),
    }
    for i, layer in enumerate(actor.layers):
        entries[f"layer{i}/w"] = layer.w
        entries[f"layer{i}/b"] = _as_matrix(layer.b)
        entries[f"layer{i}/dc"] = _scalar(layer.dc)
        entries[f"layer{i}/dv"] = _scalar(layer.dv)
        entries[f"layer{i}/vth"] = _scalar(layer.vth)
    save_arrays(path, entries)


def load_actor(path) -> ActorParams:
    e = load_arrays(path)
    try:
        n_layers = int(e["meta/layer_count"][0, 0])
        encoder = EncoderParams(mu=e["mu"], sigma=e["sigma"],
                                epsilon=float(e["meta/epsilon"][0, 0]))
        layers = [
            LifLayerParams(w=e[f"layer{i}/w"], b=e[f"layer{i}/b"].reshape(-1),
                           dc=float(e[f"layer{i}/dc"][0, 0]),
                           dv=float(e[f"layer{i}/dv"][0, 0]),
                           vth=float(e[f"layer{i}/vth"][0, 0]))
            for i in range(n_layers)
        ]
        decoder = DecoderParams(wa=e["wa"], ba=e["ba"].reshape(-1))
        return ActorParams(encoder=encoder, layers=layers, decoder=decoder,
                           timesteps=int(e["meta/timesteps"][0, 0]),
                           action_bound=e["meta/action_bound"].reshape(-1))
    except KeyError as exc:
        raise ContractViolation(f"{path}: missing checkpoint entry {exc}") from exc


def _net_entries(prefix: str, named: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{name}": _as_matrix(p) for name, p in named.items()}


def save_td3(path, state: Td3State) -> None:
    """Everything needed to resume training except the replay buffer."""
    entries: dict[str, np.ndarray] = {"meta/update_count": _scalar(state.update_count)}
    entries.update(_net_entries("actor", state.actor.named()))
    entries.update(_net_entries("actor_target", state.actor_target.named()))
    entries.update(_net_entries("q1", state.critics.q1.named()))
    entries.update(_net_entries("q2", state.critics.q2.named()))
    entries.update(_net_entries("q1_target", state.critics_target.q1.named()))
    entries.update(_net_entries("q2_target", state.critics_target.q2.named()))
    for key, opt in state.optimizers.items():
        entries[f"opt/{key}/m"] = _as_matrix(opt.m)
        entries[f"opt/{key}/v"] = _as_matrix(opt.v)
        entries[f"opt/{key}/t"] = _scalar(opt.step_count)
    save_arrays(path, entries)


def _restore_net(prefix: str, obj, entries: dict[str, np.ndarray]) -> None:
    for name, p in obj.named().items():
        key = f"{prefix}/{name}"
        if key not in entries:
            raise ContractViolation(f"missing checkpoint entry {key!r}")
        obj.set_named(name, entries[key].reshape(p.shape))


def load_td3(path, state: Td3State) -> Td3State:
    """Restore a checkpoint into an identically shaped trainer state, in place."""
    e = load_arrays(path)
    _restore_net("actor", state.actor, e)
    _restore_net("actor_target", state.actor_target, e)
    _restore_net("q1", state.critics.q1, e)
    _restore_net("q2", state.critics.q2, e)
    _restore_net("q1_target", state.critics_target.q1, e)
    _restore_net("q2_target", state.critics_target.q2, e)
    for key, opt in state.optimizers.items():
        for suffix in ("m", "v", "t"):
            if f"opt/{key}/{suffix}" not in e:
                raise ContractViolation(f"missing checkpoint entry opt/{key}/{suffix}")
        opt.m[...] = e[f"opt/{key}/m"].reshape(opt.m.shape)
        opt.v[...] = e[f"opt/{key}/v"].reshape(opt.v.shape)
        opt.step_count = int(e[f"opt/{key}/t"][0, 0])
    state.update_count = int(e["meta/update_count"][0, 0])
    return state
