"""Training loop, multi-seed orchestration, ablation grids and reports."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agents import DivergenceError, ReplayBuffer, TabularQAgent, TD3Agent
from ..envs import make_env
from ..memory import EpisodicMemory
from ..shaping import ShapingPipeline
from .config import ConfigError, RunConfig, convert_value

log = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "step", "episode", "train_return_raw", "train_return_revised", "eval_return_mean",
    "memory_entries", "mean_score_norm", "once_visited_fraction", "wall_clock_ms",
)
SNAPSHOT_NAME = "memory.txt"
METRICS_NAME = "metrics.csv"


@dataclass
class MetricsRow:
    step: int
    episode: int
    train_return_raw: float | None = None
    train_return_revised: float | None = None
    eval_return_mean: float | None = None
    memory_entries: int | None = None
    mean_score_norm: float | None = None
    once_visited_fraction: float | None = None
    wall_clock_ms: float = 0.0

    def cells(self) -> list[str]:
        out = []
        for name in METRICS_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(f"{v:.3f}" if name == "wall_clock_ms" else repr(v))
            else:
                out.append(str(v))
        return out


@dataclass
class SeedResult:
    seed: int
    outdir: str
    ok: bool
    steps_to_threshold: float
    final_eval: float | None
    message: str = ""


def resolve_outdir(cfg: RunConfig) -> Path:
    return Path(os.environ.get("NECSA_OUTDIR") or cfg.outdir)


def _make_agent(cfg: RunConfig, spec, seed: int):
    agent_cfg = cfg.agent_settings()
    if cfg.agent == "tabular":
        n_states = int(spec.state_upper[0]) + 1
        return TabularQAgent(n_states, spec.n_actions, agent_cfg, seed=seed)
    return TD3Agent(spec.state_dim, spec.action_lower, spec.action_upper, agent_cfg, seed=seed)


def evaluate(agent, env_name: str, episodes: int, seed: int) -> float:
    env = make_env(env_name)
    total = 0.0
    for k in range(episodes):
        s = env.reset(seed=1_000_003 * (seed + 1) + k)
        done = False
        while not done:
            s, r, done = env.step(agent.act(s, explore=False))
            total += r
    return total / episodes


def run_seed(cfg: RunConfig, seed: int, outdir: str | os.PathLike | None = None) -> SeedResult:
    """Train one seed and write ``metrics.csv`` and the memory snapshot."""
    out = Path(outdir) if outdir is not None else resolve_outdir(cfg) / str(seed)
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg.env)
    spec = env.spec
    seeds = np.random.SeedSequence(seed).generate_state(3)
    agent = _make_agent(cfg, spec, int(seeds[0]))
    agent_cfg = agent.config
    buffer = ReplayBuffer(spec.state_dim, max(spec.action_dim, 1), agent_cfg.buffer_size, seed=int(seeds[1]))
    pipeline = ShapingPipeline(
        cfg.shaping, spec.state_lower, spec.state_upper, spec.action_lower, spec.action_upper,
        revise=cfg.necsa,
    )
    memory = pipeline.memory
    qmode = cfg.shaping.measure_mode == "qvalue"
    threshold = cfg.resolved_threshold
    start = time.perf_counter()

    def clock() -> float:
        return (time.perf_counter() - start) * 1000.0

    rows_written = 0
    steps_to_threshold = math.inf
    final_eval = None
    ok, message = True, ""
    with open(out / METRICS_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)

        def emit(row: MetricsRow) -> None:
            nonlocal rows_written
            writer.writerow(row.cells())
            rows_written += 1

        s = env.reset(seed=int(seeds[2]))
        episode = 0
        try:
            for step in range(cfg.total_steps):
                if step < agent_cfg.start_steps:
                    a = agent.random_action()
                else:
                    a = agent.act(s, explore=True)
                q = agent.q_estimate(s, a) if qmode else None
                s_next, r, done = env.step(a)
                tr = pipeline.step_hook(s, a, r, done, s_next, q)
                buffer.add(s, a, tr.r_hat, s_next, env.terminal)
                if done:
                    g_raw = math.fsum(pipeline.rewards)
                    g_rev = math.fsum(pipeline.revised)
                    pipeline.end_episode()
                    episode += 1
                    emit(MetricsRow(
                        step=step + 1, episode=episode,
                        train_return_raw=g_raw, train_return_revised=g_rev,
                        memory_entries=len(memory),
                        mean_score_norm=memory.mean_normalized_score() if len(memory) else None,
                        once_visited_fraction=memory.once_visited_fraction(),
                        wall_clock_ms=clock(),
                    ))
                    s = env.reset()
                else:
                    s = s_next
                if step + 1 >= max(agent_cfg.start_steps, agent_cfg.batch_size):
                    agent.update(buffer.sample(agent_cfg.batch_size))
                if (step + 1) % cfg.eval_every == 0:
                    final_eval = evaluate(agent, cfg.env, cfg.eval_episodes, seed)
                    if not math.isfinite(final_eval):
                        raise DivergenceError(f"evaluation return is {final_eval}")
                    if final_eval >= threshold and math.isinf(steps_to_threshold):
                        steps_to_threshold = step + 1
                    emit(MetricsRow(
                        step=step + 1, episode=episode, eval_return_mean=final_eval,
                        memory_entries=len(memory),
                        mean_score_norm=memory.mean_normalized_score() if len(memory) else None,
                        once_visited_fraction=memory.once_visited_fraction(),
                        wall_clock_ms=clock(),
                    ))
        except (DivergenceError, FloatingPointError) as exc:
            ok, message = False, f"seed {seed} diverged: {exc}"
            log.error(message)
            nan = float("nan")
            emit(MetricsRow(step=step + 1, episode=episode, train_return_raw=nan,
                            train_return_revised=nan, eval_return_mean=nan, wall_clock_ms=clock()))
    memory.snapshot(out / SNAPSHOT_NAME)
    return SeedResult(seed, str(out), ok, steps_to_threshold, final_eval, message)


def _run_seed_job(args):
    cfg, seed, out = args
    return run_seed(cfg, seed, out)


def run(cfg: RunConfig, jobs: int = 1, outdir: str | os.PathLike | None = None) -> list[SeedResult]:
    """Run every configured seed, each in isolation (optionally as parallel processes)."""
    base = Path(outdir) if outdir is not None else resolve_outdir(cfg)
    tasks = [(cfg, seed, base / str(seed)) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_seed_job, tasks))
    return [_run_seed_job(t) for t in tasks]


# -- reading results ------------------------------------------------------


def read_metrics(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def eval_curve(rows: list[dict[str, str]]) -> list[tuple[int, float]]:
    return [(int(r["step"]), float(r["eval_return_mean"])) for r in rows if r["eval_return_mean"]]


def steps_to_threshold(rows: list[dict[str, str]], threshold: float) -> float:
    """First eval step whose mean return reaches ``threshold``; inf if never."""
    for step, value in eval_curve(rows):
        if value >= threshold:
            return float(step)
    return math.inf


def final_eval(rows: list[dict[str, str]]) -> float | None:
    curve = eval_curve(rows)
    return curve[-1][1] if curve else None


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


# -- ablations -------------------------------------------------------------


def parse_grid(spec: str) -> dict[str, list]:
    """``"m=1,2,3; measure_mode=score,qvalue"`` -> {"m": [1, 2, 3], ...}."""
    grid: dict[str, list] = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} is not key=values")
        key, raw = (x.strip() for x in part.split("=", 1))
        values = [convert_value(key, v) for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid entry {key!r} lists no values")
        grid[key] = values
    if not grid:
        raise ConfigError("empty ablation grid")
    return grid


def ablate(cfg: RunConfig, grid: dict[str, list], jobs: int = 1,
           outdir: str | os.PathLike | None = None) -> Path:
    """Run the cross product of ``grid`` over all seeds; write ``ablation.csv``."""
    base = Path(outdir) if outdir is not None else resolve_outdir(cfg)
    keys = list(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    threshold = cfg.resolved_threshold
    summary_path = base / "ablation.csv"
    base.mkdir(parents=True, exist_ok=True)
    rows = []
    for cell in cells:
        name = "_".join(f"{k}-{v}" for k, v in cell.items())
        cell_cfg = cfg.with_overrides(**cell)
        results = run(cell_cfg, jobs=jobs, outdir=base / name)
        rows.append((cell, name, summarize_cell(base / name, cell_cfg.seeds, threshold), results))
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + SUMMARY_COLUMNS)
        for cell, name, summary, _ in rows:
            writer.writerow([cell[k] for k in keys] + [name] + summary)
    return summary_path


SUMMARY_COLUMNS = [
    "cell", "seeds", "final_eval_mean", "final_eval_std",
    "steps_to_threshold_median", "steps_to_threshold", "once_visited_fraction_mean",
]


def summarize_cell(cell_dir: Path, seeds: list[int], threshold: float) -> list[str]:
    finals, stt, once = [], [], []
    for seed in seeds:
        rows = read_metrics(Path(cell_dir) / str(seed) / METRICS_NAME)
        f = final_eval(rows)
        finals.append(math.nan if f is None else f)
        stt.append(steps_to_threshold(rows, threshold))
        last = [r for r in rows if r["once_visited_fraction"]]
        once.append(float(last[-1]["once_visited_fraction"]) if last else math.nan)
    finals_arr = np.array(finals)
    return [
        " ".join(map(str, seeds)),
        _fmt(finals_arr.mean()),
        _fmt(finals_arr.std()),
        _fmt(np.median(stt)),
        " ".join(_fmt(x) for x in stt),
        _fmt(np.mean(once)),
    ]


# -- reports ----------------------------------------------------------------


@dataclass
class DensityReport:
    histogram: dict[int, int]
    entries: int
    occurrences: int
    once_visited_fraction: float


def report_density(snapshot: str | os.PathLike, out: str | os.PathLike | None = None) -> DensityReport:
    """Visits -> pattern-count histogram of a memory snapshot, written as CSV."""
    memory = EpisodicMemory.load(snapshot)
    hist = memory.density_histogram()
    occurrences = sum(v * c for v, c in hist.items())
    report = DensityReport(hist, len(memory), occurrences, memory.once_visited_fraction())
    out = Path(out) if out is not None else Path(snapshot).with_name("density.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["visits", "keys"])
        for visits in sorted(hist):
            writer.writerow([visits, hist[visits]])
    return report


def compare(run_dirs: list[str | os.PathLike], threshold: float) -> list[dict]:
    """Per run directory: per-seed steps-to-threshold and final eval, plus their medians/means."""
    table = []
    for d in run_dirs:
        d = Path(d)
        seed_dirs = sorted((p for p in d.iterdir() if (p / METRICS_NAME).exists()), key=lambda p: p.name)
        if not seed_dirs:
            raise FileNotFoundError(f"no seed directories with {METRICS_NAME} under {d}")
        stt, finals = [], []
        for sd in seed_dirs:
            rows = read_metrics(sd / METRICS_NAME)
            stt.append(steps_to_threshold(rows, threshold))
            f = final_eval(rows)
            finals.append(math.nan if f is None else f)
        table.append({
            "run": str(d),
            "seeds": [p.name for p in seed_dirs],
            "steps_to_threshold": stt,
            "steps_to_threshold_median": float(np.median(stt)),
            "final_eval_mean": float(np.mean(finals)),
        })
    return table


def strip_wall_clock(path: str | os.PathLike) -> list[list[str]]:
    """Metrics rows without the wall-clock column (for determinism comparisons)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    idx = METRICS_COLUMNS.index("wall_clock_ms")
    return [r[:idx] + r[idx + 1:] for r in rows]


def config_for_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return dataclasses.replace(cfg, seeds=[seed])
