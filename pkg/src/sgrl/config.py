"""Flat key=value experiment configuration.

Files are plain text: one `key = value` per line, `#` starts a comment,
blank lines are skipped. Every key has a default, so an empty file is a
valid config. Lists (seeds, surrogate kinds, hidden sizes) are written as
comma-separated values. parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .envs import ENV_NAMES
from .spiking_actor import ActorConfig
from .surrogate import SurrogateSpec, canonical_kind
from .td3 import Td3Config
from .tensor_core import ContractViolation


class ConfigError(ContractViolation):
    """Invalid configuration; message names the offending key."""


@dataclass
class ExperimentConfig:
    env: str = "pendulum"
    surrogate: tuple[str, ...] = ("trapezoidal",)
    w1: float = 0.25
    w2: float = 0.75
    vth: float = 0.5
    seeds: tuple[int, ...] = (0, 1, 2)
    total_env_steps: int = 60_000
    eval_every: int = 2000
    eval_episodes: int = 5
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
    encoder_pop: int = 10
    decoder_pop: int = 10
    hidden_sizes: tuple[int, ...] = (256, 256)
    critic_hidden: tuple[int, ...] = (256, 256)
    timesteps: int = 5
    current_decay: float = 0.5
    voltage_decay: float = 0.75
    encoder_epsilon: float = 0.5
    output_dir: str = "runs"

    # ---- parsing / serialization -------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        seen: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in fields:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            seen[key] = _parse_value(key, fields[key].type, value)
        cfg = cls(**seen)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    # ---- validation and derived objects ------------------------------

    def validate(self) -> None:
        if self.env not in ENV_NAMES:
            raise ConfigError(f"env: unknown environment {self.env!r}; choose from {ENV_NAMES}")
        if not self.surrogate:
            raise ConfigError("surrogate: need at least one kind")
        for kind in self.surrogate:
            try:
                canonical_kind(kind)
            except ContractViolation as exc:
                raise ConfigError(f"surrogate: {exc}") from exc
        if len(set(map(canonical_kind, self.surrogate))) != len(self.surrogate):
            raise ConfigError("surrogate: kinds must be distinct")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds: must be >= 0")
        if self.w2 <= 0.0:
            raise ConfigError(f"w2: must be > 0, got {self.w2}")
        if not 0.0 <= self.w1 <= self.w2:
            raise ConfigError(f"w1: must satisfy 0 <= w1 <= w2, got w1={self.w1}, w2={self.w2}")
        for key in ("total_env_steps", "eval_every", "eval_episodes", "timesteps",
                    "encoder_pop", "decoder_pop", "batch_size", "buffer_capacity"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps: must be >= 0, got {self.warmup_steps}")
        if any(h < 1 for h in self.hidden_sizes) or any(h < 1 for h in self.critic_hidden):
            raise ConfigError("hidden_sizes/critic_hidden: layer widths must be >= 1")
        try:
            self.td3_config()
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc

    def td3_config(self) -> Td3Config:
        return Td3Config(gamma=self.gamma, tau=self.tau, actor_lr=self.actor_lr,
                         critic_lr=self.critic_lr, policy_delay=self.policy_delay,
                         target_noise_std=self.target_noise_std,
                         target_noise_clip=self.target_noise_clip,
                         exploration_noise_std=self.exploration_noise_std,
                         batch_size=self.batch_size, warmup_steps=self.warmup_steps,
                         buffer_capacity=self.buffer_capacity)

    def actor_arch(self) -> ActorConfig:
        return ActorConfig(encoder_pop=self.encoder_pop, decoder_pop=self.decoder_pop,
                           hidden_sizes=tuple(self.hidden_sizes), timesteps=self.timesteps,
                           current_decay=self.current_decay, voltage_decay=self.voltage_decay,
                           vth=self.vth, encoder_epsilon=self.encoder_epsilon)

    def surrogate_specs(self) -> list[tuple[str, SurrogateSpec]]:
        """Canonical (kind, spec) pairs in configured order."""
        out = []
        for kind in self.surrogate:
            c = canonical_kind(kind)
            out.append((c, SurrogateSpec.make(c, w1=self.w1, w2=self.w2, vth=self.vth)))
        return out


_LIST_FIELDS = {
    "surrogate": str,
    "seeds": int,
    "hidden_sizes": int,
    "critic_hidden": int,
}


def _parse_value(key: str, type_name, raw: str):
    if key in _LIST_FIELDS:
        elem = _LIST_FIELDS[key]
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        try:
            return tuple(elem(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse list element: {exc}") from exc
    name = type_name if isinstance(type_name, str) else getattr(type_name, "__name__", str(type_name))
    try:
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {name}, got {raw!r}") from exc


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
