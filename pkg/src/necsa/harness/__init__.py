from .config import ConfigError, RunConfig, config_from_sections, dump_config, parse_config
from .runner import (
    METRICS_COLUMNS,
    DensityReport,
    MetricsRow,
    SeedResult,
    ablate,
    compare,
    parse_grid,
    report_density,
    run,
    run_seed,
    steps_to_threshold,
)

__all__ = [
    "ConfigError", "RunConfig", "config_from_sections", "dump_config", "parse_config",
    "METRICS_COLUMNS", "DensityReport", "MetricsRow", "SeedResult", "ablate", "compare",
    "parse_grid", "report_density", "run", "run_seed", "steps_to_threshold",
]
