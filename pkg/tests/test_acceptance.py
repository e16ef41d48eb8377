"""End-to-end acceptance checks; each test prints a PASS/FAIL line in the session summary."""

import csv
import math
import time
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np
import pytest

from necsa.abstraction import BoundedVector, GridKey, PatternKey, discretize
from necsa.envs import ENVS, make_env
from necsa.harness import ablate, parse_config, parse_grid, report_density, run_seed
from necsa.harness.runner import read_metrics, steps_to_threshold, strip_wall_clock
from necsa.memory import EpisodicMemory
from necsa.shaping import revise_reward

from test_agents import gradient_check

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def criterion(record_property):
    def declare(number: int, title: str):
        record_property("criterion", number)
        record_property("title", title)
        return lambda detail: record_property("detail", detail)
    return declare


def random_memory(rng, mode, n_entries, dim=3, N=50):
    mem = EpisodicMemory(mode=mode, m=2, grid_count=N)
    idx = rng.integers(0, N, size=(n_entries, 2 * dim))
    seen, patterns = set(), []
    for row in idx.tolist():
        t = tuple(row)
        if t not in seen:
            seen.add(t)
            patterns.append(PatternKey((GridKey(t[:dim], N), GridKey(t[dim:], N))))
    for start in range(0, len(patterns), 1000):
        chunk = patterns[start:start + 1000]
        if mode == "score":
            mem.observe_episode(chunk, float(rng.normal() * 100))
        else:
            mem.observe_q_episode(chunk, (rng.normal(size=len(chunk)) * 10).tolist())
    return mem


class TestAcceptance:
    def test_01_score_oracle(self, criterion):
        report = criterion(1, "memory scores equal brute-force occurrence-weighted means")
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        mem = EpisodicMemory(m=3, grid_count=4)
        total, count = defaultdict(float), Counter()
        for _ in range(200):
            length = int(rng.integers(1, 60))
            stream = [GridKey(tuple(rng.integers(0, 4, size=2).tolist()), 4) for _ in range(length)]
            patterns = [PatternKey(tuple(stream[max(0, t - 2):t + 1])) for t in range(length)]
            G = float(rng.normal() * 50)
            mem.observe_episode(patterns, G)
            for p in patterns:
                total[p.flat()] += G
                count[p.flat()] += 1
        worst = 0.0
        assert len(mem) == len(count)
        for p, E, eta, c in mem.items():
            expected = total[p.flat()] / count[p.flat()]
            assert eta == count[p.flat()] and c * eta == pytest.approx(E, rel=1e-9)
            worst = max(worst, abs(c - expected) / max(abs(expected), 1e-300))
        elapsed = time.perf_counter() - t0
        report(f"{len(mem)} keys, max rel err {worst:.2e}, {elapsed:.2f}s")
        assert worst <= 1e-9
        assert elapsed < 5.0

    def test_02_revise_reward(self, criterion):
        report = criterion(2, "reward revision examples and |r_hat - r| <= epsilon")
        t0 = time.perf_counter()
        assert revise_reward(1.0, 0.8, 0.5, 0.2) == pytest.approx(1.06, abs=1e-12)
        for eps in (0.0, 0.1, 0.2, 3.0):
            assert revise_reward(0.3, 0.42, 0.42, eps) == 0.3
        for c in (0.0, 0.3, 1.0):
            assert revise_reward(-2.5, c, 0.6, 0.0) == -2.5
        rng = np.random.default_rng(7)
        r = rng.normal(size=100_000) * 10
        c, mean = rng.random(100_000), rng.random(100_000)
        eps = rng.random(100_000)
        worst = max(abs(revise_reward(*args) - args[0]) - args[3]
                    for args in zip(r.tolist(), c.tolist(), mean.tolist(), eps.tolist()))
        elapsed = time.perf_counter() - t0
        report(f"max(|dr| - eps) = {worst:.2e}, {elapsed:.2f}s")
        # the difference (c - mean) is at most 1 in magnitude; allow one rounding step of r
        assert worst <= 1e-12
        assert elapsed < 1.0

    def test_03_discretization(self, criterion):
        report = criterion(3, "discretization round trip, clipping and last-interval closure")
        t0 = time.perf_counter()
        N = 5
        rng = np.random.default_rng(3)
        for name in ENVS:
            spec = make_env(name).spec
            lo = np.array(spec.state_lower + spec.action_lower)
            hi = np.array(spec.state_upper + spec.action_upper)
            template = BoundedVector(np.zeros_like(lo), lo, hi)
            width = (hi - lo) / N
            # random cells -> representative (cell centre) -> same key
            cells = rng.integers(0, N, size=(100_000, lo.size))
            reps = lo + (cells + 0.5) * width
            for cell, rep in zip(cells.tolist(), reps):
                assert discretize(template.with_values(rep), N).indices == tuple(cell)
            # out-of-range components clamp to the boundary interval; the upper bound is in the last
            over = hi + rng.random(lo.size) * (hi - lo)
            under = lo - rng.random(lo.size) * (hi - lo)
            assert discretize(template.with_values(over), N).indices == (N - 1,) * lo.size
            assert discretize(template.with_values(under), N).indices == (0,) * lo.size
            assert discretize(template.with_values(hi), N).indices == (N - 1,) * lo.size
            assert discretize(template.with_values(lo), N).indices == (0,) * lo.size
        elapsed = time.perf_counter() - t0
        report(f"{len(ENVS)} env specs x 1e5 vectors, {elapsed:.2f}s")
        assert elapsed < 5.0

    @pytest.mark.slow
    def test_04_zero_epsilon_identity(self, criterion, tmp_path):
        report = criterion(4, "epsilon=0 shaping equals the baseline on ChainMDP")
        t0 = time.perf_counter()
        cfg = parse_config(CONFIGS / "chain.ini").with_overrides(total_steps=50_000)
        for seed in (0, 1, 2):
            run_seed(cfg.with_overrides(epsilon=0.0), seed, tmp_path / "eps0" / str(seed))
            run_seed(cfg.with_overrides(necsa=False), seed, tmp_path / "base" / str(seed))
            a = strip_wall_clock(tmp_path / "eps0" / str(seed) / "metrics.csv")
            b = strip_wall_clock(tmp_path / "base" / str(seed) / "metrics.csv")
            assert a == b and len(a) > 1
        elapsed = time.perf_counter() - t0
        report(f"3 seeds x 50k steps, {elapsed:.1f}s")
        assert elapsed < 120.0

    def test_05_gradient_check(self, criterion):
        report = criterion(5, "analytic gradients match central finite differences")
        t0 = time.perf_counter()
        worst = max(gradient_check(seed) for seed in range(100))
        elapsed = time.perf_counter() - t0
        report(f"100 nets, max rel err {worst:.2e}, {elapsed:.2f}s")
        assert worst < 1e-4
        assert elapsed < 10.0

    def test_06_constant_time_lookup(self, criterion):
        report = criterion(6, "lookup latency with 1e6 entries <= 2x latency with 1e3")
        t0 = time.perf_counter()
        N = 1000

        def build(n):
            keys = [PatternKey((GridKey((i % N, i // N), N),)) for i in range(n)]
            mem = EpisodicMemory(m=1, grid_count=N)
            for start in range(0, n, 10_000):
                mem.observe_episode(keys[start:start + 10_000], float(start))
            return mem

        def queries(n):
            # fresh keys built from fresh ints (as discretize produces them), so the
            # only difference between the two cases is the size of the table
            i = np.random.default_rng(0).integers(0, n, size=100_000)
            cells = np.stack([i % N, i // N], axis=1).tolist()
            return [PatternKey((GridKey(tuple(c), N),)) for c in cells]

        def mean_latency(mem, qs):
            start = time.perf_counter()
            for p in qs:
                mem.lookup(p)
            return (time.perf_counter() - start) / len(qs)

        mem_small, mem_large = build(1_000), build(1_000_000)
        q_small, q_large = queries(1_000), queries(1_000_000)
        small = large = math.inf
        for _ in range(5):  # interleaved rounds; best round per size
            small = min(small, mean_latency(mem_small, q_small))
            large = min(large, mean_latency(mem_large, q_large))
        elapsed = time.perf_counter() - t0
        report(f"{small * 1e6:.2f}us vs {large * 1e6:.2f}us, ratio {large / small:.2f}, {elapsed:.1f}s")
        assert large <= 2.0 * small
        assert elapsed < 60.0

    @pytest.mark.slow
    def test_07_point_mass_sample_efficiency(self, criterion, tmp_path):
        report = criterion(7, "point mass: median steps-to-threshold below the epsilon=0 baseline")
        cfg = parse_config(CONFIGS / "point_mass.ini")
        threshold = cfg.resolved_threshold
        medians, slowest = {}, 0.0
        for tag, run_cfg in (("necsa", cfg), ("baseline", cfg.with_overrides(epsilon=0.0))):
            steps = []
            for seed in cfg.seeds:
                start = time.perf_counter()
                res = run_seed(run_cfg, seed, tmp_path / tag / str(seed))
                slowest = max(slowest, time.perf_counter() - start)
                assert res.ok
                steps.append(steps_to_threshold(read_metrics(tmp_path / tag / str(seed) / "metrics.csv"), threshold))
            medians[tag] = float(np.median(steps))
        report(f"necsa median {medians['necsa']}, baseline median {medians['baseline']}, "
               f"slowest seed {slowest:.0f}s")
        assert medians["necsa"] < medians["baseline"]
        assert slowest < 600.0

    @pytest.mark.slow
    def test_08_ablation_grids(self, criterion, tmp_path):
        report = criterion(8, "m and measure-mode ablation grids emit well-formed summaries")
        t0 = time.perf_counter()
        cfg = parse_config(CONFIGS / "chain.ini")
        orderings = []
        for spec in ("m=1,2,3", "measure_mode=score,qvalue"):
            key = spec.split("=")[0]
            path = ablate(cfg, parse_grid(spec), outdir=tmp_path / key)
            with open(path) as fh:
                reader = csv.DictReader(fh)
                rows = list(reader)
            values = [str(v) for v in parse_grid(spec)[key]]
            assert [r[key] for r in rows] == values
            for r in rows:
                assert r["seeds"] and math.isfinite(float(r["final_eval_mean"]))
                assert float(r["final_eval_std"]) >= 0.0
                assert r["steps_to_threshold_median"]
            ranked = sorted(rows, key=lambda r: -float(r["final_eval_mean"]))
            orderings.append(f"{key}: " + " >= ".join(f"{r[key]} ({float(r['final_eval_mean']):.3f})" for r in ranked))
        elapsed = time.perf_counter() - t0
        report("; ".join(orderings) + f"; {elapsed:.0f}s")
        assert elapsed < 900.0

    def test_09_density_conservation(self, criterion, tmp_path):
        report = criterion(9, "density histogram conserves pattern occurrences")
        cfg = parse_config(CONFIGS / "chain.ini").with_overrides(total_steps=20_000, eval_every=5_000)
        fractions = []
        for m in (1, 3):
            out = tmp_path / f"m{m}"
            run_seed(cfg.with_overrides(m=m), 0, out)
            rows = read_metrics(out / "metrics.csv")
            # each finished episode contributes one pattern per step; its last step is a metrics row
            finished = [int(r["step"]) for r in rows if r["train_return_raw"]]
            density = report_density(out / "memory.txt")
            assert sum(v * k for v, k in density.histogram.items()) == finished[-1]
            fractions.append(f"m={m} once-visited {density.once_visited_fraction:.3f}")
        report(", ".join(fractions))

    def test_10_snapshot_round_trip(self, criterion, tmp_path):
        report = criterion(10, "snapshot round trip of 1e5-entry memories in both modes")
        t0 = time.perf_counter()
        rng = np.random.default_rng(10)
        sizes = []
        for mode in ("score", "qvalue"):
            mem = random_memory(rng, mode, 100_000)
            mem.snapshot(tmp_path / f"{mode}.txt")
            back = EpisodicMemory.load(tmp_path / f"{mode}.txt")
            assert back.state_equal(mem)
            assert back.aggregates == mem.aggregates
            sizes.append(len(mem))
        elapsed = time.perf_counter() - t0
        report(f"{sizes[0]} score + {sizes[1]} qvalue entries, {elapsed:.2f}s")
        assert min(sizes) >= 95_000
        assert elapsed < 10.0
