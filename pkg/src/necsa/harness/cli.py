"""Command line entry point: ``necsa run|ablate|density|compare``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys

from .config import ConfigError, parse_config
from .runner import ablate, compare, parse_grid, report_density, run

log = logging.getLogger("necsa")


def _fmt_steps(x: float) -> str:
    return "never" if math.isinf(x) else str(int(x))


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed_override is not None:
        cfg = dataclasses.replace(cfg, seeds=[args.seed_override])
    results = run(cfg, jobs=args.jobs)
    for res in results:
        status = "ok" if res.ok else f"FAILED ({res.message})"
        print(f"seed {res.seed}: steps_to_threshold={_fmt_steps(res.steps_to_threshold)} "
              f"final_eval={res.final_eval} -> {res.outdir} [{status}]")
    return 0 if all(r.ok for r in results) else 1


def cmd_ablate(args) -> int:
    cfg = parse_config(args.config)
    path = ablate(cfg, parse_grid(args.grid), jobs=args.jobs)
    print(path.read_text(), end="")
    return 0


def cmd_density(args) -> int:
    report = report_density(args.snapshot, args.out)
    print("visits,keys")
    for visits in sorted(report.histogram):
        print(f"{visits},{report.histogram[visits]}")
    print(f"# patterns={report.entries} occurrences={report.occurrences} "
          f"once_visited_fraction={report.once_visited_fraction:.6f}")
    return 0


def cmd_compare(args) -> int:
    table = compare(args.runs, args.threshold)
    print("run,median_steps_to_threshold,final_eval_mean,per_seed")
    for row in table:
        per_seed = " ".join(_fmt_steps(x) for x in row["steps_to_threshold"])
        print(f"{row['run']},{_fmt_steps(row['steps_to_threshold_median'])},"
              f"{row['final_eval_mean']:.4f},{per_seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="necsa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train every seed of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed-override", type=int)
    p.add_argument("--jobs", type=int, default=1, help="seeds to run as parallel processes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run a grid of settings over all seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True, help='e.g. "m=1,2,3; measure_mode=score,qvalue"')
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("density", help="visit-count histogram of a memory snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("compare", help="steps-to-threshold across run directories")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.8)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"necsa: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
