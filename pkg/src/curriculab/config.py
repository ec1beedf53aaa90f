"""Run configuration: flat ``section.key = value`` text.

Lines starting with ``#`` and blank lines are ignored. Every key has a
default (see :data:`KEYS`); unknown keys and malformed values raise
:class:`ConfigError`. ``render`` writes every key, so
``parse(render(cfg)) == cfg``.

Keys and defaults::

    env.preset                   chain8      chain8 | pm_flat8 | pm_scaled
    run.name                     ""          label used by `compare` (defaults to scheduler kind)
    run.n_iterations             200         policy updates per seed
    run.episodes_per_iteration   16
    run.seeds                    0           comma-separated, distinct
    run.output_dir               runs/default
    run.eval_every               50          0 = evaluate only after the last iteration
    run.n_eval_per_task          5           evaluation episodes per task (majority vote)
    run.emit_plots               false       also render SVG figures
    scheduler.kind               LP_ACRL     LP_ACRL | ALP | PLR | LRPC | SC | UNIFORM
    scheduler.beta               0.1         softmax temperature
    scheduler.floor_mix          0.05        uniform mixing weight
    scheduler.stage_len          10          policy updates per curriculum stage
    scheduler.ema_alpha          0.2         within-stage reward smoothing
    scheduler.stale_decay        0.9         LP decay per unsampled stage
    scheduler.normalize_lp       true        divide scores by max |score|
    scheduler.sc.base            1.0         SC range at the start (primary dimension units)
    scheduler.sc.span            3.0         SC range growth
    scheduler.sc.rate            0.002       SC sigmoid slope per iteration
    scheduler.sc.midpoint        1000.0      SC sigmoid midpoint (iterations)
    learner.gamma                0.99
    learner.lam                  0.95
    learner.clip                 0.2
    learner.lr                   0.0003
    learner.epochs               4
    learner.minibatch            256
    learner.hidden               64
    learner.vf_coef              0.5
    learner.ent_coef             0.0
    learner.max_grad_norm        0.5
    learner.reward_scale         1.0         multiplies rewards before GAE and value fitting
    learner.init_log_std         0.0
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .curriculum import SchedulerConfig, SchedulerKind, SCParams
from .learner import LearnerConfig

ENV_PRESETS = ("chain8", "pm_flat8", "pm_scaled")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    env_preset: str = "chain8"
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    n_iterations: int = 200
    episodes_per_iteration: int = 16
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs/default"
    eval_every: int = 50
    n_eval_per_task: int = 5
    emit_plots: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        if self.env_preset not in ENV_PRESETS:
            raise ConfigError(f"unknown env preset {self.env_preset!r}; choose from {ENV_PRESETS}")
        if self.n_iterations < 1:
            raise ConfigError("run.n_iterations must be >= 1")
        if self.episodes_per_iteration < 1:
            raise ConfigError("run.episodes_per_iteration must be >= 1")
        if not self.seeds:
            raise ConfigError("run.seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("run.seeds must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("run.seeds must be non-negative")
        if self.eval_every < 0 or self.n_eval_per_task < 1:
            raise ConfigError("run.eval_every must be >= 0 and run.n_eval_per_task >= 1")

    @property
    def label(self) -> str:
        return self.name or self.scheduler.kind.value

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# key -> (object path, python type)
def _keys() -> dict[str, tuple[tuple[str, ...], type]]:
    keys: dict[str, tuple[tuple[str, ...], type]] = {
        "env.preset": (("env_preset",), str),
        "run.name": (("name",), str),
        "run.n_iterations": (("n_iterations",), int),
        "run.episodes_per_iteration": (("episodes_per_iteration",), int),
        "run.seeds": (("seeds",), tuple),
        "run.output_dir": (("output_dir",), str),
        "run.eval_every": (("eval_every",), int),
        "run.n_eval_per_task": (("n_eval_per_task",), int),
        "run.emit_plots": (("emit_plots",), bool),
    }
    types = {"kind": SchedulerKind, "beta": float, "floor_mix": float, "stage_len": int, "ema_alpha": float,
             "stale_decay": float, "normalize_lp": bool}
    for f in dataclasses.fields(SchedulerConfig):
        if f.name == "sc":
            continue
        keys[f"scheduler.{f.name}"] = (("scheduler", f.name), types[f.name])
    for f in dataclasses.fields(SCParams):
        keys[f"scheduler.sc.{f.name}"] = (("scheduler", "sc", f.name), float)
    for f in dataclasses.fields(LearnerConfig):
        typ = int if f.name in ("epochs", "minibatch", "hidden") else float
        keys[f"learner.{f.name}"] = (("learner", f.name), typ)
    return keys


KEYS = _keys()


def _parse_value(key: str, raw: str, typ: type) -> Any:
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return low == "true"
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if typ is str:
            if len(raw) >= 2 and raw[0] == raw[-1] == '"':
                return raw[1:-1]
            return raw
        if issubclass(typ, enum.Enum):
            return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unsupported type {typ}")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, str):
        return f'"{value}"' if value == "" or value != value.strip() else value
    return str(value)


def _get(cfg: RunConfig, path: tuple[str, ...]) -> Any:
    obj: Any = cfg
    for p in path:
        obj = getattr(obj, p)
    return obj


def _set(obj: Any, path: tuple[str, ...], value: Any) -> Any:
    if len(path) == 1:
        return dataclasses.replace(obj, **{path[0]: value})
    return dataclasses.replace(obj, **{path[0]: _set(getattr(obj, path[0]), path[1:], value)})


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, KEYS[key][1])
    return apply(base or RunConfig(), values)


def apply(cfg: RunConfig, values: dict[str, Any]) -> RunConfig:
    """Return ``cfg`` with dotted-key overrides applied and validated."""
    obj: Any = cfg
    try:
        for key, value in values.items():
            obj = _set(obj, KEYS[key][0], value)
        # re-run validation of nested configs
        return dataclasses.replace(obj)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def render(cfg: RunConfig) -> str:
    lines = []
    section = None
    for key, (path, _) in KEYS.items():
        head = key.split(".")[0]
        if head != section:
            if section is not None:
                lines.append("")
            section = head
        lines.append(f"{key} = {_format_value(_get(cfg, path))}")
    return "\n".join(lines) + "\n"


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text)
