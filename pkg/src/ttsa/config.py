"""INI run configuration: parsing, validation, typed access.

Errors carry the offending key name and, when the key appears in the
user's file, its line number, so a bad value is a one-hop fix.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .heavy_ball import (
    FiniteSumObjective,
    HeavyBallParams,
    nonconvex_demo,
    quadratic_sum,
)
from .registry import INSTANCE_NAMES, Instance, build_instance
from .schedules import StepSchedule, TwoTimescaleSchedule

__all__ = [
    "ConfigError",
    "Config",
    "ChainConfig",
    "ScheduleSpec",
    "DEFAULT_CONFIG",
    "load_config",
    "parse_config_text",
]

DEFAULT_CONFIG = """\
[system]
name = hhb

[objective]
family = quadratic_sum
n = 2
N = 4
seed = 7
spread = 0.01

[hhb]
kappa = 1.0
T = 0.5

[schedule.slow]
family = power_law
a = 1.0
b = 1.0
rho = 1.0

[schedule.fast]
family = power_law
a = 1.0
b = 1.0
rho = 0.6

[run]
mode = deterministic
num_flow_steps = 10000
seeds = 0

[diagnostics]
T = 1.0
graph = true
graph_verdict = false
tracking = true

[output]
dir = out

[chain]
system = linear_decay_demo
tau = 1.0
eps = 0.5
budget = 20
start = 1.0
target = 0.0
"""

_OBJECTIVE_FAMILIES = ("quadratic_sum", "nonconvex_demo")
_SCHEDULE_FAMILIES = ("power_law", "explicit")
_MODES = ("deterministic", "stochastic")
_MISSING = object()


class ConfigError(Exception):
    """Invalid or missing configuration; the message names the key."""


def _find_line(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            continue
        if current != section:
            continue
        for sep in ("=", ":"):
            head, _, _ = stripped.partition(sep)
            if _ != "" or head != stripped:
                if head.strip() == key:
                    return lineno
                break
    return None


class _Reader:
    """Typed getters over a parsed config, with key-naming errors."""

    def __init__(self, parser: configparser.ConfigParser, user_text: str,
                 path: str):
        self.parser = parser
        self.user_text = user_text
        self.path = path

    def error(self, section: str, key: str, msg: str) -> ConfigError:
        lineno = _find_line(self.user_text, section, key)
        where = f"{self.path}:{lineno}" if lineno is not None else self.path
        return ConfigError(f"{where}: key {section}.{key}: {msg}")

    def raw(self, section: str, key: str, default: Any = _MISSING) -> str:
        try:
            return self.parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            if default is _MISSING:
                raise self.error(section, key, "missing required key") from None
            return default

    def get_str(self, section: str, key: str, default: Any = _MISSING,
                choices: tuple[str, ...] | None = None) -> str:
        value = self.raw(section, key, default).strip()
        if choices is not None and value not in choices:
            raise self.error(section, key,
                             f"got {value!r}, expected one of {', '.join(choices)}")
        return value

    def get_float(self, section: str, key: str,
                  default: Any = _MISSING) -> float:
        raw = self.raw(section, key, default)
        if isinstance(raw, float):
            return raw
        try:
            return float(raw)
        except ValueError:
            raise self.error(section, key,
                             f"got {raw.strip()!r}, expected a number") from None

    def get_int(self, section: str, key: str, default: Any = _MISSING) -> int:
        raw = self.raw(section, key, default)
        if isinstance(raw, int):
            return raw
        try:
            return int(raw)
        except ValueError:
            raise self.error(section, key,
                             f"got {raw.strip()!r}, expected an integer") from None

    def get_bool(self, section: str, key: str, default: Any = _MISSING) -> bool:
        raw = self.raw(section, key, default)
        if isinstance(raw, bool):
            return raw
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise self.error(section, key,
                         f"got {raw.strip()!r}, expected true or false")

    def get_float_list(self, section: str, key: str,
                       default: Any = _MISSING) -> tuple[float, ...] | None:
        raw = self.raw(section, key, default)
        if raw is None or isinstance(raw, tuple):
            return raw
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise self.error(section, key,
                             f"got {raw.strip()!r}, expected comma-separated "
                             "numbers") from None

    def get_int_list(self, section: str, key: str,
                     default: Any = _MISSING) -> tuple[int, ...]:
        raw = self.raw(section, key, default)
        if isinstance(raw, tuple):
            return raw
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise self.error(section, key,
                             f"got {raw.strip()!r}, expected comma-separated "
                             "integers") from None


@dataclass(frozen=True)
class ScheduleSpec:
    """One step-size schedule as configured."""

    family: str
    a: float = 1.0
    b: float = 1.0
    rho: float = 1.0
    values: tuple[float, ...] | None = None

    def build(self) -> StepSchedule:
        if self.family == "power_law":
            return StepSchedule.power_law(a=self.a, b=self.b, rho=self.rho)
        return StepSchedule.explicit(np.asarray(self.values))


@dataclass(frozen=True)
class ChainConfig:
    system: str
    tau: float
    eps: float
    budget: int
    start: tuple[float, ...]
    target: tuple[float, ...]
    dt: float | None = None
    internal_lo: tuple[float, ...] | None = None
    internal_hi: tuple[float, ...] | None = None


@dataclass
class Config:
    """Fully validated run configuration."""

    path: str
    system_name: str
    objective_family: str
    objective_n: int
    objective_N: int
    objective_seed: int
    objective_spread: float
    hhb_kappa: float
    hhb_T: float
    slow: ScheduleSpec
    fast: ScheduleSpec
    mode: str
    num_flow_steps: int
    seeds: tuple[int, ...]
    diag_T: float
    diag_graph: bool
    diag_graph_verdict: bool
    diag_tracking: bool
    out_dir: str
    chain: ChainConfig
    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    def echo(self) -> dict[str, dict[str, str]]:
        """Effective configuration as plain strings, for the manifest."""
        return {s: dict(kv) for s, kv in self.sections.items()}

    def build_objective(self) -> FiniteSumObjective:
        if self.objective_family == "quadratic_sum":
            return quadratic_sum(dim=self.objective_n,
                                 num_components=self.objective_N,
                                 seed=self.objective_seed,
                                 spread=self.objective_spread)
        return nonconvex_demo(dim=self.objective_n,
                              num_components=self.objective_N,
                              seed=self.objective_seed)

    def build_params(self) -> HeavyBallParams:
        return HeavyBallParams(kappa=self.hhb_kappa, dwell=self.hhb_T)

    def build_instance(self, name: str | None = None) -> Instance:
        name = self.system_name if name is None else name
        if name == "linear_decay_demo":
            return build_instance(name)
        return build_instance(name, objective=self.build_objective(),
                              params=self.build_params())

    def build_schedule(self) -> TwoTimescaleSchedule:
        return TwoTimescaleSchedule(slow=self.slow.build(),
                                    fast=self.fast.build())


def _schedule_spec(reader: _Reader, section: str) -> ScheduleSpec:
    family = reader.get_str(section, "family", "power_law",
                            choices=_SCHEDULE_FAMILIES)
    if family == "explicit":
        values = reader.get_float_list(section, "values")
        if not values:
            raise reader.error(section, "values", "explicit schedule needs at "
                               "least one step")
        for v in values:
            if not v > 0:
                raise reader.error(section, "values",
                                   f"steps must be positive, got {v}")
        return ScheduleSpec(family="explicit", values=values)
    a = reader.get_float(section, "a", 1.0)
    b = reader.get_float(section, "b", 1.0)
    rho = reader.get_float(section, "rho", 1.0)
    if not a > 0:
        raise reader.error(section, "a", f"must be positive, got {a}")
    if not b > 0:
        raise reader.error(section, "b", f"must be positive, got {b}")
    if not rho > 0:
        raise reader.error(section, "rho",
                           f"decay exponent must be positive, got {rho}")
    return ScheduleSpec(family="power_law", a=a, b=b, rho=rho)


def parse_config_text(text: str, path: str = "<config>") -> Config:
    """Parse and validate configuration text over the built-in defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # [objective] holds both n and N
    parser.read_string(DEFAULT_CONFIG, source="<defaults>")
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    reader = _Reader(parser, text, path)

    system_name = reader.get_str("system", "name", choices=INSTANCE_NAMES)
    family = reader.get_str("objective", "family", choices=_OBJECTIVE_FAMILIES)
    n = reader.get_int("objective", "n")
    if n < 1:
        raise reader.error("objective", "n", f"must be at least 1, got {n}")
    N = reader.get_int("objective", "N")
    if N < 1:
        raise reader.error("objective", "N", f"must be at least 1, got {N}")
    seed = reader.get_int("objective", "seed")
    spread = reader.get_float("objective", "spread", 0.01)
    if spread < 0:
        raise reader.error("objective", "spread",
                           f"must be nonnegative, got {spread}")

    kappa = reader.get_float("hhb", "kappa")
    if not kappa > 0:
        raise reader.error("hhb", "kappa", f"must be positive, got {kappa}")
    dwell = reader.get_float("hhb", "T")
    if not dwell > 0:
        raise reader.error("hhb", "T", f"must be positive, got {dwell}")

    slow = _schedule_spec(reader, "schedule.slow")
    fast = _schedule_spec(reader, "schedule.fast")

    mode = reader.get_str("run", "mode", choices=_MODES)
    num_flow_steps = reader.get_int("run", "num_flow_steps")
    if num_flow_steps < 1:
        raise reader.error("run", "num_flow_steps",
                           f"must be at least 1, got {num_flow_steps}")
    seeds = reader.get_int_list("run", "seeds")
    if not seeds:
        raise reader.error("run", "seeds", "need at least one seed")

    diag_T = reader.get_float("diagnostics", "T", 1.0)
    if not diag_T > 0:
        raise reader.error("diagnostics", "T", f"must be positive, got {diag_T}")
    diag_graph = reader.get_bool("diagnostics", "graph", True)
    diag_graph_verdict = reader.get_bool("diagnostics", "graph_verdict", False)
    diag_tracking = reader.get_bool("diagnostics", "tracking", True)

    out_dir = reader.get_str("output", "dir")
    if not out_dir:
        raise reader.error("output", "dir", "must be a nonempty path")

    chain_system = reader.get_str("chain", "system", "linear_decay_demo",
                                  choices=INSTANCE_NAMES)
    tau = reader.get_float("chain", "tau")
    if tau < 0:
        raise reader.error("chain", "tau", f"must be nonnegative, got {tau}")
    eps = reader.get_float("chain", "eps")
    if not eps > 0:
        raise reader.error("chain", "eps", f"must be positive, got {eps}")
    budget = reader.get_int("chain", "budget")
    if budget < 1:
        raise reader.error("chain", "budget", f"must be at least 1, got {budget}")
    start = reader.get_float_list("chain", "start")
    target = reader.get_float_list("chain", "target")
    dt_raw = reader.raw("chain", "dt", None)
    dt = None
    if dt_raw is not None:
        dt = reader.get_float("chain", "dt")
        if not dt > 0:
            raise reader.error("chain", "dt", f"must be positive, got {dt}")
    lo = reader.get_float_list("chain", "internal_lo", None)
    hi = reader.get_float_list("chain", "internal_hi", None)
    if (lo is None) != (hi is None):
        which = "internal_hi" if hi is None else "internal_lo"
        raise reader.error("chain", which,
                           "internal_lo and internal_hi must be given together")
    if lo is not None and len(lo) != len(hi):
        raise reader.error("chain", "internal_hi",
                           f"length {len(hi)} does not match internal_lo "
                           f"length {len(lo)}")

    sections = {s: dict(parser.items(s)) for s in parser.sections()}

    return Config(
        path=path,
        system_name=system_name,
        objective_family=family,
        objective_n=n,
        objective_N=N,
        objective_seed=seed,
        objective_spread=spread,
        hhb_kappa=kappa,
        hhb_T=dwell,
        slow=slow,
        fast=fast,
        mode=mode,
        num_flow_steps=num_flow_steps,
        seeds=seeds,
        diag_T=diag_T,
        diag_graph=diag_graph,
        diag_graph_verdict=diag_graph_verdict,
        diag_tracking=diag_tracking,
        out_dir=out_dir,
        chain=ChainConfig(system=chain_system, tau=tau, eps=eps, budget=budget,
                          start=start, target=target, dt=dt,
                          internal_lo=lo, internal_hi=hi),
        sections=sections,
    )


def load_config(path: str | None) -> Config:
    """Load a config file, or the built-in defaults when path is None."""
    if path is None:
        return parse_config_text("", path="<defaults>")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc})") from None
    return parse_config_text(text, path=path)
