"""Command-line entry point.

Verbs: train (multi-seed surrogate comparison from a config file), aggregate
(reduce run CSVs), plot (aggregate CSV to SVG), gradcheck (analytic vs
finite-difference gradients), env-rollout (random or checkpointed policy).
Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 check failure.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import load_actor
from .config import ConfigError, ExperimentConfig
from .envs import ENV_NAMES, make_env
from .experiment import (aggregate_runs, discover_run_files, gradcheck_report,
                         plot_curves, rollout, run_experiment)
from .surrogate import SurrogateSpec, canonical_kind
from .tensor_core import ContractViolation, Rng

GRADCHECK_TOLERANCE = 1e-4

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CHECK = 3


class _Parser(argparse.ArgumentParser):
    """Usage mistakes are validation failures, not argparse's default exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgrl", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    train = sub.add_parser("train", help="run the configured experiment")
    train.add_argument("--config", help="key=value config file (defaults apply if omitted)")
    train.add_argument("--surrogate", help="override: single surrogate kind")
    train.add_argument("--seed", type=int, help="override: single seed")
    train.add_argument("--out", help="override: output directory")

    agg = sub.add_parser("aggregate", help="reduce run CSVs to mean/std per kind")
    agg.add_argument("--in", dest="in_dir", required=True, help="directory of run CSVs")
    agg.add_argument("--out", required=True, help="aggregate CSV path")

    plot = sub.add_parser("plot", help="render an aggregate CSV as an SVG chart")
    plot.add_argument("--in", dest="in_file", required=True, help="aggregate CSV")
    plot.add_argument("--out", required=True, help="output SVG path")

    grad = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    grad.add_argument("--spec", default="trapezoidal", help="surrogate kind")
    grad.add_argument("--w1", type=float, default=0.25)
    grad.add_argument("--w2", type=float, default=0.75)
    grad.add_argument("--vth", type=float, default=0.5)
    grad.add_argument("--seed", type=int, default=0)

    roll = sub.add_parser("env-rollout", help="roll episodes with a random or saved policy")
    roll.add_argument("--env", default="pendulum", choices=ENV_NAMES)
    roll.add_argument("--policy", default="random", choices=("random", "checkpoint"))
    roll.add_argument("--checkpoint", help="actor checkpoint (required for --policy checkpoint)")
    roll.add_argument("--episodes", type=int, default=5)
    roll.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_train(args) -> int:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.surrogate is not None:
        cfg.surrogate = (canonical_kind(args.surrogate),)
    if args.seed is not None:
        cfg.seeds = (args.seed,)
    if args.out is not None:
        cfg.output_dir = args.out
    cfg.validate()
    result = run_experiment(cfg)
    for run in result.runs:
        print(f"{run.kind} seed {run.seed}: final eval mean return "
              f"{run.final_eval_mean:.2f} -> {run.csv_path}")
    print(f"aggregate: {result.aggregate_path}")
    print(f"plot:      {result.plot_path}")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    files = discover_run_files(args.in_dir)
    if not files:
        raise ContractViolation(f"{args.in_dir}: no run CSVs found")
    out = aggregate_runs(files, args.out)
    print(f"aggregated {len(files)} run files -> {out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    out = plot_curves(args.in_file, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if args.w2 < 1e-3:
        raise ConfigError(f"w2: degenerate support {args.w2!r} (need w2 >= 0.001)")
    spec = SurrogateSpec.make(canonical_kind(args.spec), w1=args.w1, w2=args.w2, vth=args.vth)
    lines, worst = gradcheck_report(spec, seed=args.seed)
    for line in lines:
        print(line)
    if worst > GRADCHECK_TOLERANCE:
        print(f"FAIL: worst relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}")
        return EXIT_CHECK
    print(f"OK: worst relative error {worst:.3e} within {GRADCHECK_TOLERANCE:.0e}")
    return EXIT_OK


def _cmd_env_rollout(args) -> int:
    env = make_env(args.env)
    actor = None
    if args.policy == "checkpoint":
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required with --policy checkpoint")
        actor = load_actor(args.checkpoint)
        if actor.encoder.obs_dim != env.spec.obs_dim or actor.decoder.wa.shape[0] != env.spec.action_dim:
            raise ConfigError(
                f"checkpoint dimensions do not match environment {args.env!r}")
    returns = rollout(env, args.episodes, Rng(args.seed), actor)
    for i, ret in enumerate(returns):
        print(f"episode {i}: return {ret:.3f}")
    mean = sum(returns) / len(returns)
    print(f"mean return over {len(returns)} episodes: {mean:.3f}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "aggregate": _cmd_aggregate,
    "plot": _cmd_plot,
    "gradcheck": _cmd_gradcheck,
    "env-rollout": _cmd_env_rollout,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.verb](args)
    except ContractViolation as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
