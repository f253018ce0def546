"""Experiment harness: seeded training runs, CSV metrics, aggregation, SVG plots.

Each (surrogate kind, seed) pair trains independently from its own derived
random streams and writes one CSV of evaluation rows plus a final actor
checkpoint, so runs can fan out across processes (capped by SGRL_THREADS)
and reruns with the same config are bytewise identical. Aggregation then
reduces per-kind curves to mean and population standard deviation across
seeds, and the plotter renders those as shaded-band learning curves.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_actor
from .config import ConfigError, ExperimentConfig
from .envs import make_env
from .spiking_actor import (ActorConfig, ActorParams, actor_backward,
                            actor_forward, init_actor_params)
from .surrogate import SurrogateSpec, canonical_kind
from .td3 import Transition, select_action, td3_init, train_step
from .tensor_core import ContractViolation, Rng

RUN_HEADER = "env_step,mean_return,std_return,critic_loss,mean_q,surrogate,seed"
AGGREGATE_HEADER = "surrogate,env_step,mean_return,std_return,n_seeds"

# Root-stream tags; every per-run random stream is derived from Rng(seed).
TAG_INIT = 0
TAG_ENV = 1
TAG_EXPLORE = 2
TAG_TRAIN = 3
TAG_EVAL = 4


@dataclass
class RunResult:
    kind: str
    seed: int
    csv_path: str
    checkpoint_path: str
    final_eval_mean: float


@dataclass
class ExperimentResult:
    runs: list[RunResult]
    aggregate_path: str
    plot_path: str


def _mean_or_nan(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _fmt(x: float) -> str:
    return repr(float(x))


def evaluate_policy(env, actor: ActorParams, episodes: int, rng: Rng) -> tuple[float, float, list[float]]:
    """Greedy rollouts; returns mean, population std, and per-episode returns."""
    returns = []
    for _ in range(episodes):
        state, obs = env.reset(rng)
        total = 0.0
        done = False
        while not done:
            a, _ = actor_forward(actor, obs, need_trace=False)
            state, obs, r, done = env.step(state, a)
            total += r
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns)), returns


def random_baseline(env, episodes: int, rng: Rng) -> tuple[float, float, list[float]]:
    """Uniform-random policy returns; the learning yardstick."""
    returns = []
    bound = env.spec.action_bound
    for _ in range(episodes):
        state, obs = env.reset(rng)
        total = 0.0
        done = False
        while not done:
            a = rng.uniform(-bound, bound, size=env.spec.action_dim)
            state, obs, r, done = env.step(state, a)
            total += r
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns)), returns


def run_single(cfg: ExperimentConfig, kind: str, seed: int,
               out_dir: str | None = None) -> RunResult:
    """Train one (surrogate, seed) run and write its CSV and checkpoint."""
    kind = canonical_kind(kind)
    spec = SurrogateSpec.make(kind, w1=cfg.w1, w2=cfg.w2, vth=cfg.vth)
    env = make_env(cfg.env)
    td3cfg = cfg.td3_config()
    arch = cfg.actor_arch()

    root = Rng(seed)
    env_rng = root.derive(TAG_ENV)
    explore_rng = root.derive(TAG_EXPLORE)
    train_rng = root.derive(TAG_TRAIN)
    eval_rng = root.derive(TAG_EVAL)
    state = td3_init(root.derive(TAG_INIT), env.spec.obs_dim, env.spec.action_dim,
                     env.spec.action_bound, td3cfg, arch, tuple(cfg.critic_hidden))

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{kind}_seed{seed}.csv"
    ckpt_path = out / f"{kind}_seed{seed}.ckpt"

    rows = [RUN_HEADER]
    window_losses: list[float] = []
    window_qs: list[float] = []
    final_eval_mean = float("nan")

    env_state, obs = env.reset(env_rng)
    for t in range(cfg.total_env_steps):
        if t < td3cfg.warmup_steps:
            a = explore_rng.uniform(-env.spec.action_bound, env.spec.action_bound,
                                    size=env.spec.action_dim)
        else:
            a = select_action(state, td3cfg, obs, explore_rng, explore=True)
        env_state, obs_next, r, done = env.step(env_state, a)
        # Episodes here end only at the step limit, which cuts the trajectory
        # rather than reaching a terminal state, so the bootstrap mask stays 0.
        timeout = env_state.t >= env.spec.max_episode_steps
        stored_done = bool(done and not timeout)
        state.buffer.push(Transition(obs, np.asarray(a, dtype=np.float64).reshape(-1),
                                     r, obs_next, stored_done))
        obs = obs_next
        if done:
            env_state, obs = env.reset(env_rng)
        if t >= td3cfg.warmup_steps:
            metrics = train_step(state, td3cfg, spec, train_rng)
            if metrics is not None:
                window_losses.append(0.5 * (metrics.critic_loss1 + metrics.critic_loss2))
                if metrics.mean_q is not None:
                    window_qs.append(metrics.mean_q)
        if (t + 1) % cfg.eval_every == 0:
            mean_ret, std_ret, _ = evaluate_policy(env, state.actor, cfg.eval_episodes, eval_rng)
            final_eval_mean = mean_ret
            rows.append(",".join([
                str(t + 1), _fmt(mean_ret), _fmt(std_ret),
                _fmt(_mean_or_nan(window_losses)), _fmt(_mean_or_nan(window_qs)),
                kind, str(seed),
            ]))
            window_losses = []
            window_qs = []

    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    save_actor(ckpt_path, state.actor)
    return RunResult(kind, seed, str(csv_path), str(ckpt_path), final_eval_mean)


def _run_job(args) -> RunResult:
    cfg_text, kind, seed, out_dir = args
    return run_single(ExperimentConfig.from_text(cfg_text), kind, seed, out_dir)


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> ExperimentResult:
    """All (kind, seed) runs, then the aggregate CSV and learning-curve SVG."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(kind, seed) for kind, _ in cfg.surrogate_specs() for seed in cfg.seeds]
    workers = _worker_count()
    if workers > 1 and len(jobs) > 1:
        cfg_text = cfg.to_text()
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_job, (cfg_text, k, s, str(out))) for k, s in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_single(cfg, k, s, str(out)) for k, s in jobs]
    aggregate_path = out / "aggregate.csv"
    plot_path = out / "curves.svg"
    aggregate_runs([r.csv_path for r in results], aggregate_path)
    plot_curves(aggregate_path, plot_path)
    return ExperimentResult(results, str(aggregate_path), str(plot_path))


def _worker_count() -> int:
    raw = os.environ.get("SGRL_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SGRL_THREADS: expected an integer, got {raw!r}") from exc
    return max(1, n)


# ---- aggregation ------------------------------------------------------


def _read_run_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != RUN_HEADER:
        raise ContractViolation(f"{path}: missing run CSV header {RUN_HEADER!r}")
    cols = RUN_HEADER.split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise ContractViolation(f"{path}: malformed row {ln!r}")
        rec = dict(zip(cols, parts))
        rows.append({
            "env_step": int(rec["env_step"]),
            "mean_return": float(rec["mean_return"]),
            "surrogate": rec["surrogate"],
            "seed": int(rec["seed"]),
        })
    return rows


def discover_run_files(in_dir) -> list[str]:
    paths = sorted(str(p) for p in Path(in_dir).glob("*_seed*.csv"))
    return paths


def aggregate_runs(run_files, out_path) -> str:
    """Reduce run CSVs to per-(surrogate, step) mean and population std."""
    run_files = list(run_files)
    if not run_files:
        raise ContractViolation("aggregate: no run files given")
    by_kind: dict[str, list[tuple[int, list[int], list[float]]]] = {}
    for path in run_files:
        rows = _read_run_csv(path)
        if not rows:
            raise ContractViolation(f"{path}: run file has no evaluation rows")
        kinds = {r["surrogate"] for r in rows}
        seeds = {r["seed"] for r in rows}
        if len(kinds) != 1 or len(seeds) != 1:
            raise ContractViolation(f"{path}: expected a single (surrogate, seed) per run file")
        steps = [r["env_step"] for r in rows]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ContractViolation(f"{path}: env_step not strictly increasing")
        returns = [r["mean_return"] for r in rows]
        by_kind.setdefault(kinds.pop(), []).append((seeds.pop(), steps, returns))
    out_lines = [AGGREGATE_HEADER]
    for kind in sorted(by_kind):
        runs = sorted(by_kind[kind])
        ref_steps = runs[0][1]
        for seed, steps, _ in runs[1:]:
            if steps != ref_steps:
                raise ContractViolation(
                    f"aggregate: eval grid mismatch for kind {kind!r} (seed {seed} differs)")
        stacked = np.array([returns for _, _, returns in runs])
        means = stacked.mean(axis=0)
        stds = stacked.std(axis=0)
        for step, m, s in zip(ref_steps, means, stds):
            out_lines.append(f"{kind},{step},{_fmt(m)},{_fmt(s)},{len(runs)}")
    Path(out_path).write_text("\n".join(out_lines) + "\n", encoding="utf-8")
    return str(out_path)


def read_aggregate(path) -> dict[str, tuple[list[int], list[float], list[float], int]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != AGGREGATE_HEADER:
        raise ContractViolation(f"{path}: missing aggregate header {AGGREGATE_HEADER!r}")
    series: dict[str, tuple[list[int], list[float], list[float], int]] = {}
    for ln in lines[1:]:
        kind, step, mean, std, n = ln.split(",")
        entry = series.setdefault(kind, ([], [], [], int(n)))
        entry[0].append(int(step))
        entry[1].append(float(mean))
        entry[2].append(float(std))
    return series


# ---- SVG plotting ------------------------------------------------------

_COLORS = {
    "rectangular": "#d62728",
    "triangular": "#2ca02c",
    "trapezoidal": "#1f77b4",
}
_FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2")


def plot_curves(aggregate_path, out_svg) -> str:
    """Learning curves with shaded +-1 population-std bands, one per kind."""
    series = read_aggregate(aggregate_path)
    if not series:
        raise ContractViolation(f"{aggregate_path}: no series to plot")
    width, height = 720.0, 480.0
    ml, mr, mt, mb = 78.0, 22.0, 26.0, 56.0

    xs_all = [s for steps, _, _, _ in series.values() for s in steps]
    lo_all = [m - s for _, means, stds, _ in series.values() for m, s in zip(means, stds)]
    hi_all = [m + s for _, means, stds, _ in series.values() for m, s in zip(means, stds)]
    x_min, x_max = min(xs_all), max(xs_all)
    y_min, y_max = min(lo_all), max(hi_all)
    if x_max == x_min:
        x_max = x_min + 1
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def sx(x: float) -> float:
        return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr)

    def sy(y: float) -> float:
        return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for i in range(5):
        xv = x_min + i * (x_max - x_min) / 4
        yv = y_min + i * (y_max - y_min) / 4
        parts.append(f'<line x1="{sx(xv):.2f}" y1="{sy(y_min):.2f}" x2="{sx(xv):.2f}" '
                     f'y2="{sy(y_max):.2f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<line x1="{sx(x_min):.2f}" y1="{sy(yv):.2f}" x2="{sx(x_max):.2f}" '
                     f'y2="{sy(yv):.2f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{sx(xv):.2f}" y="{height - mb + 18:.2f}" font-size="12" '
                     f'font-family="sans-serif" text-anchor="middle">{xv:g}</text>')
        parts.append(f'<text x="{ml - 8:.2f}" y="{sy(yv) + 4:.2f}" font-size="12" '
                     f'font-family="sans-serif" text-anchor="end">{yv:.4g}</text>')
    parts.append(f'<line x1="{ml:.2f}" y1="{sy(y_min):.2f}" x2="{width - mr:.2f}" '
                 f'y2="{sy(y_min):.2f}" stroke="black" stroke-width="1.5"/>')
    parts.append(f'<line x1="{ml:.2f}" y1="{sy(y_min):.2f}" x2="{ml:.2f}" '
                 f'y2="{sy(y_max):.2f}" stroke="black" stroke-width="1.5"/>')
    parts.append(f'<text x="{(ml + width - mr) / 2:.2f}" y="{height - 12:.2f}" font-size="14" '
                 f'font-family="sans-serif" text-anchor="middle">environment steps</text>')
    parts.append(f'<text x="16" y="{(mt + height - mb) / 2:.2f}" font-size="14" '
                 f'font-family="sans-serif" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(mt + height - mb) / 2:.2f})">mean return</text>')

    fallback = iter(_FALLBACK_COLORS)
    legend_y = mt + 12
    for kind in sorted(series):
        steps, means, stds, n = series[kind]
        color = _COLORS.get(kind) or next(fallback)
        upper = [(sx(s), sy(m + d)) for s, m, d in zip(steps, means, stds)]
        lower = [(sx(s), sy(m - d)) for s, m, d in zip(steps, means, stds)]
        band = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(s):.2f},{sy(m):.2f}" for s, m in zip(steps, means))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        parts.append(f'<rect x="{ml + 10:.2f}" y="{legend_y - 9:.2f}" width="14" height="10" '
                     f'fill="{color}" fill-opacity="0.85"/>')
        parts.append(f'<text x="{ml + 30:.2f}" y="{legend_y:.2f}" font-size="12" '
                     f'font-family="sans-serif">{kind} (n={n})</text>')
        legend_y += 16
    parts.append(f'<text x="{ml + 10:.2f}" y="{legend_y:.2f}" font-size="11" '
                 f'font-family="sans-serif" fill="#555555">shaded: mean +-1 std (population) across seeds</text>')
    parts.append("</svg>")
    Path(out_svg).write_text("\n".join(parts) + "\n", encoding="utf-8")
    return str(out_svg)


# ---- gradient check ----------------------------------------------------


def gradcheck_report(spec: SurrogateSpec, seed: int = 0, obs_dim: int = 3,
                     pop: int = 10, hidden: tuple[int, ...] = (16,),
                     act_dim: int = 2, timesteps: int = 5,
                     batch: int = 4, fd_step: float = 1e-5) -> tuple[list[str], float]:
    """Worst relative error of analytic gradients vs central differences,
    per parameter group, on a smoothed-forward network."""
    if spec.w2 < 1e-3:
        raise ConfigError(f"w2: degenerate support {spec.w2!r} (need w2 >= 0.001)")
    rng = Rng(seed)
    arch = ActorConfig(encoder_pop=pop, decoder_pop=pop, hidden_sizes=tuple(hidden),
                       timesteps=timesteps, vth=spec.vth)
    params = init_actor_params(rng.derive(0), obs_dim, act_dim,
                               np.ones(act_dim), arch)
    states = rng.derive(1).uniform(-1.0, 1.0, (batch, obs_dim))
    coef = rng.derive(2).gauss(0.0, 1.0, (batch, act_dim))

    def loss(p: ActorParams) -> float:
        action, _ = actor_forward(p, states, soft=spec, need_trace=False)
        return float(np.sum(coef * action))

    _, trace = actor_forward(params, states, soft=spec)
    analytic = actor_backward(params, trace, coef, spec).named()

    lines = []
    worst = 0.0
    for name, base in params.named().items():
        fd = np.zeros_like(base)
        flat = base.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + fd_step
            up = loss(params)
            flat[i] = keep - fd_step
            down = loss(params)
            flat[i] = keep
            fd_flat[i] = (up - down) / (2.0 * fd_step)
        scale = max(float(np.max(np.abs(fd))), 1e-12)
        err = float(np.max(np.abs(analytic[name] - fd))) / scale
        worst = max(worst, err)
        lines.append(f"{name:12s} max_rel_err = {err:.3e}")
    lines.append(f"{'worst':12s} max_rel_err = {worst:.3e}")
    return lines, worst


# ---- rollouts ----------------------------------------------------------


def rollout(env, episodes: int, rng: Rng, actor: ActorParams | None = None) -> list[float]:
    """Per-episode returns under the greedy actor, or a random policy if None."""
    if actor is None:
        _, _, returns = random_baseline(env, episodes, rng)
    else:
        _, _, returns = evaluate_policy(env, actor, episodes, rng)
    return returns
