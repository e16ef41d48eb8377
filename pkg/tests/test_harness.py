import csv
import math
from pathlib import Path

import numpy as np
import pytest

from necsa.harness import (
    METRICS_COLUMNS,
    ConfigError,
    RunConfig,
    ablate,
    compare,
    dump_config,
    parse_config,
    parse_grid,
    report_density,
    run,
    run_seed,
)
from necsa.harness.cli import main
from necsa.harness.runner import read_metrics, steps_to_threshold, strip_wall_clock
from necsa.memory import EpisodicMemory

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def chain_cfg(tmp_path, **kw):
    base = RunConfig(env="chain_mdp", agent="tabular", total_steps=1500, eval_every=500,
                     eval_episodes=3, seeds=[0], outdir=str(tmp_path))
    return base.with_overrides(batch_size=4, start_steps=0, **kw)


def point_cfg(tmp_path, **kw):
    base = RunConfig(env="sparse_point_mass", agent="td3", total_steps=400, eval_every=200,
                     eval_episodes=2, seeds=[0], outdir=str(tmp_path))
    return base.with_overrides(hidden=8, batch_size=16, start_steps=100, **kw)


class TestConfig:
    def test_parse_example_configs(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            cfg = parse_config(path)
            assert cfg.total_steps >= 1 and cfg.seeds

    def test_round_trip(self, tmp_path):
        cfg = parse_config(CONFIGS / "point_mass.ini")
        (tmp_path / "c.ini").write_text(dump_config(cfg))
        assert parse_config(tmp_path / "c.ini") == cfg

    def test_values(self, tmp_path):
        (tmp_path / "c.ini").write_text(
            "[run]\nenv = chain_mdp\nagent = tabular\nseeds = 3, 4\nnecsa = false\n"
            "[shaping]\nepsilon = 0.15\nmeasure_mode = qvalue\n[agent]\ntwin = no\n"
        )
        cfg = parse_config(tmp_path / "c.ini")
        assert cfg.seeds == [3, 4] and cfg.necsa is False
        assert cfg.shaping.epsilon == 0.15 and cfg.shaping.measure_mode == "qvalue"
        assert cfg.agent_config.twin is False

    @pytest.mark.parametrize("body", [
        "[run]\nenvv = chain_mdp\n",
        "[runn]\nenv = chain_mdp\n",
        "[shaping]\nepsilonn = 0.1\n",
        "[run]\ntotal_steps = 0\n",
        "[run]\ntotal_steps = many\n",
        "[run]\nenv = atari\n",
        "[run]\nseeds =\n",
        "[run]\nenv = chain_mdp\nagent = td3\n",
        "[shaping]\nepsilon = -1\n",
    ])
    def test_rejects(self, tmp_path, body):
        (tmp_path / "c.ini").write_text(body)
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "c.ini")

    def test_zero_steps(self):
        with pytest.raises(ConfigError):
            RunConfig(total_steps=0)

    def test_parse_grid(self):
        grid = parse_grid("m=1,2,3; measure_mode=score,qvalue; epsilon=0,0.2")
        assert grid == {"m": [1, 2, 3], "measure_mode": ["score", "qvalue"], "epsilon": [0.0, 0.2]}
        with pytest.raises(ConfigError):
            parse_grid("bogus=1")


class TestRun:
    def test_metrics_file(self, tmp_path):
        res = run_seed(chain_cfg(tmp_path), 0, tmp_path / "r")
        assert res.ok
        rows = read_metrics(tmp_path / "r" / "metrics.csv")
        assert rows
        steps = [int(r["step"]) for r in rows]
        assert steps == sorted(steps)
        evals = [r for r in rows if r["eval_return_mean"]]
        assert [int(r["step"]) for r in evals] == [500, 1000, 1500]
        assert all(not r["train_return_raw"] for r in evals)
        assert (tmp_path / "r" / "memory.txt").exists()

    def test_deterministic_point_mass(self, tmp_path):
        cfg = point_cfg(tmp_path)
        run_seed(cfg, 0, tmp_path / "a")
        run_seed(cfg, 0, tmp_path / "b")
        a = strip_wall_clock(tmp_path / "a" / "metrics.csv")
        b = strip_wall_clock(tmp_path / "b" / "metrics.csv")
        assert a == b and len(a) > 2
        assert (tmp_path / "a" / "memory.txt").read_bytes() == (tmp_path / "b" / "memory.txt").read_bytes()

    def test_zero_epsilon_matches_baseline(self, tmp_path):
        run_seed(point_cfg(tmp_path, epsilon=0.0), 1, tmp_path / "necsa")
        run_seed(point_cfg(tmp_path, necsa=False), 1, tmp_path / "base")
        assert strip_wall_clock(tmp_path / "necsa" / "metrics.csv") == strip_wall_clock(tmp_path / "base" / "metrics.csv")

    def test_shaping_changes_revised_returns(self, tmp_path):
        run_seed(point_cfg(tmp_path, total_steps=1200), 0, tmp_path / "r")
        rows = [r for r in read_metrics(tmp_path / "r" / "metrics.csv") if r["train_return_raw"]]
        assert any(r["train_return_raw"] != r["train_return_revised"] for r in rows[1:])

    def test_qvalue_mode_runs(self, tmp_path):
        res = run_seed(point_cfg(tmp_path, measure_mode="qvalue"), 0, tmp_path / "q")
        assert res.ok
        assert EpisodicMemory.load(tmp_path / "q" / "memory.txt").mode == "qvalue"

    def test_ddpg_backbone(self, tmp_path):
        cfg = point_cfg(tmp_path, agent="ddpg")
        assert cfg.agent_settings().twin is False and cfg.agent_settings().policy_delay == 1
        assert run_seed(cfg, 0, tmp_path / "d").ok

    def test_outdir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NECSA_OUTDIR", str(tmp_path / "elsewhere"))
        run(chain_cfg(tmp_path / "ignored", total_steps=200, eval_every=100))
        assert (tmp_path / "elsewhere" / "0" / "metrics.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_divergence_marks_failed_row(self, tmp_path, monkeypatch):
        from necsa.agents import td3

        def boom(self, batch):
            raise td3.DivergenceError("critic loss is nan")

        monkeypatch.setattr(td3.TD3Agent, "update", boom)
        res = run_seed(point_cfg(tmp_path), 0, tmp_path / "f")
        assert not res.ok
        last = read_metrics(tmp_path / "f" / "metrics.csv")[-1]
        assert last["train_return_raw"] == "nan" and last["eval_return_mean"] == "nan"

    def test_steps_to_threshold(self):
        rows = [dict(step=str(s), eval_return_mean=v) for s, v in ((100, ""), (200, "0.5"), (300, "0.9"), (400, "1.0"))]
        assert steps_to_threshold(rows, 0.8) == 300
        assert math.isinf(steps_to_threshold(rows, 2.0))


def _independent_occurrences(metrics_path: Path) -> int:
    # every env step contributes exactly one pattern occurrence once its episode finishes
    rows = read_metrics(metrics_path)
    done = [int(r["step"]) for r in rows if r["train_return_raw"]]
    return done[-1] if done else 0


class TestReports:
    def test_density_conservation(self, tmp_path):
        run_seed(chain_cfg(tmp_path), 0, tmp_path / "r")
        report = report_density(tmp_path / "r" / "memory.txt")
        assert sum(v * c for v, c in report.histogram.items()) == _independent_occurrences(tmp_path / "r" / "metrics.csv")
        with open(tmp_path / "r" / "density.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["visits", "keys"]
        assert sum(int(v) * int(k) for v, k in rows[1:]) == report.occurrences

    def test_ablation_grid(self, tmp_path):
        cfg = chain_cfg(tmp_path, seeds=[0, 1], total_steps=600, eval_every=300)
        path = ablate(cfg, parse_grid("m=1,2,3"), outdir=tmp_path / "abl")
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["m"] for r in rows] == ["1", "2", "3"]
        for r in rows:
            finals = []
            for seed in (0, 1):
                metrics = read_metrics(tmp_path / "abl" / r["cell"] / str(seed) / "metrics.csv")
                finals.append(float([m for m in metrics if m["eval_return_mean"]][-1]["eval_return_mean"]))
            assert float(r["final_eval_mean"]) == float(np.mean(finals))
            assert float(r["final_eval_std"]) == float(np.std(finals))

    def test_compare(self, tmp_path):
        run(chain_cfg(tmp_path, seeds=[0, 1], total_steps=400, eval_every=200), outdir=tmp_path / "x")
        table = compare([tmp_path / "x"], threshold=0.8)
        assert table[0]["seeds"] == ["0", "1"] and len(table[0]["steps_to_threshold"]) == 2


class TestCLI:
    def _write(self, tmp_path, extra=""):
        path = tmp_path / "c.ini"
        path.write_text(
            f"[run]\nenv = chain_mdp\nagent = tabular\ntotal_steps = 300\neval_every = 100\n"
            f"eval_episodes = 2\nseeds = 0\noutdir = {tmp_path / 'out'}\n{extra}"
            "[agent]\nbatch_size = 4\nstart_steps = 0\n"
        )
        return path

    def test_run_and_density(self, tmp_path, capsys):
        cfg = self._write(tmp_path)
        assert main(["run", "--config", str(cfg), "--seed-override", "5"]) == 0
        metrics = tmp_path / "out" / "5" / "metrics.csv"
        with open(metrics) as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == METRICS_COLUMNS
        assert main(["density", "--snapshot", str(tmp_path / "out" / "5" / "memory.txt")]) == 0
        out = capsys.readouterr().out
        assert "visits,keys" in out and "once_visited_fraction" in out

    def test_ablate_and_compare(self, tmp_path, capsys):
        cfg = self._write(tmp_path)
        assert main(["ablate", "--config", str(cfg), "--grid", "measure_mode=score,qvalue"]) == 0
        assert (tmp_path / "out" / "ablation.csv").exists()
        assert main(["compare", "--runs", str(tmp_path / "out" / "measure_mode-score")]) == 0
        assert "median_steps_to_threshold" in capsys.readouterr().out

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\ntotal_steps = 0\n")
        assert main(["run", "--config", str(path)]) != 0
        assert "total_steps" in capsys.readouterr().err
