"""Harness behavior: schedules, CSV schema, determinism, aggregation, SVG."""

from pathlib import Path

import numpy as np
import pytest

from sgrl.config import ConfigError, ExperimentConfig
from sgrl.envs import make_env
from sgrl.experiment import (AGGREGATE_HEADER, RUN_HEADER, aggregate_runs,
                             gradcheck_report, plot_curves, random_baseline,
                             read_aggregate, run_experiment, run_single)
from sgrl.surrogate import SurrogateSpec
from sgrl.tensor_core import ContractViolation, Rng


def micro_cfg(**over):
    base = dict(total_env_steps=200, eval_every=100, eval_episodes=1,
                warmup_steps=50, batch_size=8, encoder_pop=3, decoder_pop=3,
                hidden_sizes=(8,), critic_hidden=(8,), seeds=(0,),
                env="reach", output_dir="unused")
    base.update(over)
    return ExperimentConfig(**base)


def write_run_csv(path: Path, kind: str, seed: int, rows):
    lines = [RUN_HEADER]
    for step, ret in rows:
        lines.append(f"{step},{float(ret)!r},0.0,0.0,0.0,{kind},{seed}")
    path.write_text("\n".join(lines) + "\n")


class TestRunSingle:
    def test_eval_schedule_row_count(self, tmp_path):
        # 2000 steps at eval_every=1000 gives exactly 2 rows
        cfg = micro_cfg(total_env_steps=2000, eval_every=1000, seeds=(1,))
        res = run_single(cfg, "trapezoidal", 1, str(tmp_path))
        lines = Path(res.csv_path).read_text().strip().splitlines()
        assert lines[0] == RUN_HEADER
        assert len(lines) == 1 + 2
        steps = [int(ln.split(",")[0]) for ln in lines[1:]]
        assert steps == [1000, 2000]

    def test_header_schema_exact(self, tmp_path):
        assert RUN_HEADER == "env_step,mean_return,std_return,critic_loss,mean_q,surrogate,seed"
        res = run_single(micro_cfg(), "rect", 0, str(tmp_path))
        first = Path(res.csv_path).read_text().splitlines()[0]
        assert first == RUN_HEADER

    def test_rows_carry_kind_and_seed(self, tmp_path):
        res = run_single(micro_cfg(seeds=(3,)), "tri", 3, str(tmp_path))
        for ln in Path(res.csv_path).read_text().strip().splitlines()[1:]:
            parts = ln.split(",")
            assert parts[5] == "triangular"
            assert parts[6] == "3"

    def test_rerun_bytewise_identical(self, tmp_path):
        cfg = micro_cfg(total_env_steps=300, eval_every=100)
        r1 = run_single(cfg, "trapezoidal", 0, str(tmp_path / "a"))
        r2 = run_single(cfg, "trapezoidal", 0, str(tmp_path / "b"))
        assert Path(r1.csv_path).read_bytes() == Path(r2.csv_path).read_bytes()
        assert Path(r1.checkpoint_path).read_bytes() == Path(r2.checkpoint_path).read_bytes()

    def test_checkpoint_written_and_loadable(self, tmp_path):
        from sgrl.checkpoint import load_actor
        res = run_single(micro_cfg(), "trapezoidal", 0, str(tmp_path))
        actor = load_actor(res.checkpoint_path)
        assert actor.timesteps == 5

    def test_warmup_only_run_reports_nan_metrics(self, tmp_path):
        cfg = micro_cfg(total_env_steps=100, eval_every=100, warmup_steps=100)
        res = run_single(cfg, "trapezoidal", 0, str(tmp_path))
        row = Path(res.csv_path).read_text().strip().splitlines()[1].split(",")
        assert row[3] == "nan" and row[4] == "nan"


class TestRunExperiment:
    def test_three_kinds_three_seeds_give_nine_files(self, tmp_path):
        cfg = micro_cfg(surrogate=("rect", "tri", "trap"), seeds=(0, 1, 2),
                        total_env_steps=100, eval_every=50, warmup_steps=30)
        res = run_experiment(cfg, str(tmp_path))
        csvs = sorted(p.name for p in tmp_path.glob("*_seed*.csv"))
        assert len(csvs) == 9
        assert "rectangular_seed0.csv" in csvs
        assert Path(res.aggregate_path).exists()
        assert Path(res.plot_path).exists()

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        cfg = micro_cfg(surrogate=("trap",), seeds=(0, 1),
                        total_env_steps=100, eval_every=50, warmup_steps=30)
        res_serial = run_experiment(cfg, str(tmp_path / "serial"))
        monkeypatch.setenv("SGRL_THREADS", "2")
        res_par = run_experiment(cfg, str(tmp_path / "par"))
        for a, b in zip(res_serial.runs, res_par.runs):
            assert Path(a.csv_path).read_bytes() == Path(b.csv_path).read_bytes()
        assert (Path(res_serial.aggregate_path).read_bytes()
                == Path(res_par.aggregate_path).read_bytes())

    def test_bad_threads_env_rejected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SGRL_THREADS", "many")
        with pytest.raises(ConfigError, match="SGRL_THREADS"):
            run_experiment(micro_cfg(total_env_steps=60, eval_every=30,
                                     warmup_steps=10), str(tmp_path))


class TestAggregate:
    def test_two_seeds_mean_and_population_std(self, tmp_path):
        # returns 10 and 20 at one step: mean 15, population std 5
        write_run_csv(tmp_path / "trapezoidal_seed0.csv", "trapezoidal", 0, [(100, 10.0)])
        write_run_csv(tmp_path / "trapezoidal_seed1.csv", "trapezoidal", 1, [(100, 20.0)])
        out = tmp_path / "agg.csv"
        aggregate_runs(sorted(map(str, tmp_path.glob("*_seed*.csv"))), out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == AGGREGATE_HEADER
        kind, step, mean, std, n = lines[1].split(",")
        assert (kind, step, n) == ("trapezoidal", "100", "2")
        assert float(mean) == 15.0
        assert float(std) == 5.0

    def test_single_seed_zero_band(self, tmp_path):
        write_run_csv(tmp_path / "tri_seed0.csv", "triangular", 0, [(50, -3.0), (100, -1.0)])
        out = tmp_path / "agg.csv"
        aggregate_runs([str(tmp_path / "tri_seed0.csv")], out)
        for ln in out.read_text().strip().splitlines()[1:]:
            assert float(ln.split(",")[3]) == 0.0

    def test_empty_input_no_partial_file(self, tmp_path):
        out = tmp_path / "agg.csv"
        with pytest.raises(ContractViolation):
            aggregate_runs([], out)
        assert not out.exists()

    def test_grid_mismatch_error(self, tmp_path):
        write_run_csv(tmp_path / "a.csv", "trapezoidal", 0, [(100, 1.0)])
        write_run_csv(tmp_path / "b.csv", "trapezoidal", 1, [(999, 2.0)])
        with pytest.raises(ContractViolation, match="grid"):
            aggregate_runs([str(tmp_path / "a.csv"), str(tmp_path / "b.csv")],
                           tmp_path / "agg.csv")

    def test_bad_header_rejected(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("step,ret\n1,2\n")
        with pytest.raises(ContractViolation, match="header"):
            aggregate_runs([str(bad)], tmp_path / "agg.csv")

    def test_self_consistency_with_hand_recompute(self, tmp_path):
        cfg = micro_cfg(surrogate=("trap",), seeds=(0, 1, 2),
                        total_env_steps=100, eval_every=50, warmup_steps=30)
        res = run_experiment(cfg, str(tmp_path))
        per_seed = {}
        for run in res.runs:
            for ln in Path(run.csv_path).read_text().strip().splitlines()[1:]:
                parts = ln.split(",")
                per_seed.setdefault(int(parts[0]), []).append(float(parts[1]))
        series = read_aggregate(res.aggregate_path)["trapezoidal"]
        for step, mean, std in zip(*series[:3]):
            vals = np.array(per_seed[step])
            assert mean == pytest.approx(float(np.mean(vals)), abs=1e-12)
            assert std == pytest.approx(float(np.std(vals)), abs=1e-12)


class TestPlot:
    def make_aggregate(self, tmp_path):
        write_run_csv(tmp_path / "trapezoidal_seed0.csv", "trapezoidal", 0,
                      [(100, -9.0), (200, -5.0)])
        write_run_csv(tmp_path / "trapezoidal_seed1.csv", "trapezoidal", 1,
                      [(100, -7.0), (200, -3.0)])
        write_run_csv(tmp_path / "rectangular_seed0.csv", "rectangular", 0,
                      [(100, -8.0), (200, -6.0)])
        out = tmp_path / "agg.csv"
        aggregate_runs(sorted(map(str, tmp_path.glob("*_seed*.csv"))), out)
        return out

    def test_svg_structure(self, tmp_path):
        agg = self.make_aggregate(tmp_path)
        svg_path = tmp_path / "curves.svg"
        plot_curves(agg, svg_path)
        svg = svg_path.read_text()
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2  # one mean line per kind
        assert svg.count("<polygon") == 2   # one band per kind
        assert "trapezoidal" in svg and "rectangular" in svg
        assert "population" in svg
        assert "environment steps" in svg and "mean return" in svg

    def test_missing_aggregate_header(self, tmp_path):
        bad = tmp_path / "agg.csv"
        bad.write_text("nope\n")
        with pytest.raises(ContractViolation):
            plot_curves(bad, tmp_path / "o.svg")


class TestGradcheckReport:
    def test_report_lists_groups_and_passes(self):
        spec = SurrogateSpec.trapezoidal(0.25, 0.75)
        lines, worst = gradcheck_report(spec, seed=2, obs_dim=2, pop=3,
                                        hidden=(6,), act_dim=1, timesteps=2,
                                        batch=2)
        joined = "\n".join(lines)
        for group in ("mu", "sigma", "layer0/w", "wa", "ba", "worst"):
            assert group in joined
        assert worst < 1e-4

    def test_degenerate_support_rejected(self):
        with pytest.raises(ConfigError, match="w2"):
            gradcheck_report(SurrogateSpec.trapezoidal(0.0, 1e-9))


class TestBaseline:
    def test_pendulum_random_baseline_ballpark(self):
        env = make_env("pendulum")
        mean, std, returns = random_baseline(env, 20, Rng(0))
        assert len(returns) == 20
        assert -2000.0 < mean < -600.0
        assert std > 0.0
