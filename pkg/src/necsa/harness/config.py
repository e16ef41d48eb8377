"""Run configuration: an INI-style ``key = value`` file with [run], [shaping], [agent] sections."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from ..agents import AgentConfig
from ..envs import ENVS, make_env
from ..shaping import ShapingConfig

AGENT_KINDS = ("td3", "ddpg", "tabular")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str = "sparse_point_mass"
    agent: str = "td3"
    necsa: bool = True
    total_steps: int = 20_000
    eval_every: int = 1000
    eval_episodes: int = 10
    seeds: list[int] = field(default_factory=lambda: [0])
    outdir: str = "runs"
    threshold: float | None = None
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    agent_config: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {sorted(ENVS)}")
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {AGENT_KINDS}")
        discrete = make_env(self.env).spec.discrete
        if discrete != (self.agent == "tabular"):
            raise ConfigError(f"agent {self.agent!r} cannot drive env {self.env!r}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_every and eval_episodes must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")

    @property
    def resolved_threshold(self) -> float:
        return make_env(self.env).spec.threshold if self.threshold is None else self.threshold

    def agent_settings(self) -> AgentConfig:
        """Agent config with the backbone switches implied by the agent kind."""
        if self.agent == "ddpg":
            return dataclasses.replace(self.agent_config, twin=False, policy_delay=1, target_noise=0.0)
        return self.agent_config

    def with_overrides(self, **values) -> RunConfig:
        """Copy with fields replaced; keys may name run, shaping or agent fields."""
        run_kw, shaping_kw, agent_kw = {}, {}, {}
        shaping_names = {f.name for f in dataclasses.fields(ShapingConfig)}
        agent_names = {f.name for f in dataclasses.fields(AgentConfig)}
        run_names = {f.name for f in dataclasses.fields(RunConfig)} - {"shaping", "agent_config"}
        for k, v in values.items():
            if k in shaping_names:
                shaping_kw[k] = v
            elif k in agent_names:
                agent_kw[k] = v
            elif k in run_names:
                run_kw[k] = v
            else:
                raise ConfigError(f"unknown setting {k!r}")
        try:
            return dataclasses.replace(
                self,
                shaping=dataclasses.replace(self.shaping, **shaping_kw),
                agent_config=dataclasses.replace(self.agent_config, **agent_kw),
                **run_kw,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _convert(kind, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in ("float | None",):
            return None if raw.lower() in ("", "none") else float(raw)
        if kind in ("list[int]",):
            return [int(x) for x in raw.replace(",", " ").split()]
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _field_types(cls) -> dict[str, object]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def convert_value(key: str, raw: str):
    """Parse ``raw`` as the type of setting ``key`` (searching run, shaping, agent fields)."""
    for cls in (RunConfig, ShapingConfig, AgentConfig):
        types = _field_types(cls)
        if key in types and key not in ("shaping", "agent_config"):
            return _convert(types[key], raw, key)
    raise ConfigError(f"unknown setting {key!r}")


def parse_config(path: str | os.PathLike) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_sections({s: dict(parser[s]) for s in parser.sections()}, source=str(path))


def config_from_sections(sections: dict[str, dict[str, str]], source: str = "<config>") -> RunConfig:
    known = {"run": RunConfig, "shaping": ShapingConfig, "agent": AgentConfig}
    values: dict[str, dict] = {name: {} for name in known}
    for section, items in sections.items():
        if section not in known:
            raise ConfigError(f"{source}: unknown section [{section}]")
        types = _field_types(known[section])
        for key, raw in items.items():
            if key not in types or key in ("shaping", "agent_config"):
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[section][key] = _convert(types[key], raw, f"{section}.{key}")
    try:
        shaping = ShapingConfig(**values["shaping"])
        agent = AgentConfig(**values["agent"])
        return RunConfig(shaping=shaping, agent_config=agent, **values["run"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` in the same format ``parse_config`` reads."""
    lines = ["[run]"]
    for f in dataclasses.fields(RunConfig):
        if f.name in ("shaping", "agent_config"):
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = ", ".join(map(str, v))
        lines.append(f"{f.name} = {'none' if v is None else v}")
    for title, obj in (("shaping", cfg.shaping), ("agent", cfg.agent_config)):
        lines += ["", f"[{title}]"]
        lines += [f"{f.name} = {getattr(obj, f.name)}" for f in dataclasses.fields(obj)]
    return "\n".join(lines) + "\n"
