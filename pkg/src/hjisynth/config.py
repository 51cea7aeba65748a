"""Run configuration: YAML files, presets and scenario specs."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .pde import PRESET_GAMMA, PRESETS, InitialCondition, ParabolicProblem, make_problem
from .separable import Interval


class ConfigError(ValueError):
    pass


# fields of ParabolicProblem that may be overridden from a config
_PROBLEM_FIELDS = {f.name for f in dataclasses.fields(ParabolicProblem)}
_INTERVAL_FIELDS = {"control_support", "disturbance_support", "spatial_domain"}

SIGNAL_KINDS = (
    "zero", "sinusoid", "constant", "piecewise", "w_c",
    "hji_disturbance", "replay_hji_control", "replay_hjb_control",
)


@dataclass
class SignalSpec:
    """Disturbance description resolved at run time.

    ``hji_disturbance`` is ``kappa * w_gamma(x) + eta sin(omega t)``; the two
    replay kinds use ``kappa * u(t)`` recorded from an undisturbed run.
    """

    kind: str = "zero"
    eta: float = 0.0
    omega: float = 0.0
    value: float = 0.0
    kappa: float = 1.0
    breakpoints: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}; choose from {SIGNAL_KINDS}")


@dataclass
class ScenarioSpec:
    name: str
    signal: SignalSpec = field(default_factory=SignalSpec)
    initial_condition: InitialCondition | None = None


@dataclass
class RunConfig:
    problem: str = "test1_nosource"
    preset_args: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    d: int = 6
    M: int = 2
    half_width: float = 2.0
    gamma: Any = "preset"
    epsilon: float = 1e-6
    max_outer: int = 200
    max_inner: int = 200
    quadrature_order: int | None = None
    initial_control: Any = "small"
    horizon: float = 5.0
    dt: float = 1e-3
    bracket: list = field(default_factory=lambda: [1e-3, 10.0])
    bisect_tol: float = 1e-3
    # gamma-star feasibility: converged and (optionally) w = 0 stabilizing
    check_stability: bool = True
    degrees: list = field(default_factory=lambda: [2, 4, 6, 8, 10])
    scenarios: list = field(default_factory=list)
    out: str = "runs"
    cache: bool = True
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.problem != "oracle_1d" and self.problem not in PRESETS:
            raise ConfigError(f"unknown problem {self.problem!r}; presets: {sorted(PRESETS)} or oracle_1d")
        for name in ("d", "M", "jobs", "max_outer", "max_inner"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("half_width", "epsilon", "horizon", "dt", "bisect_tol"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.bracket) != 2 or not 0 < float(self.bracket[0]) < float(self.bracket[1]):
            raise ConfigError("bracket must be [lo, hi] with 0 < lo < hi")
        unknown = set(self.overrides) - _PROBLEM_FIELDS
        if unknown:
            raise ConfigError(f"unknown problem overrides {sorted(unknown)}")
        self.gamma_value()
        self.build_problem()
        return self

    # -- resolution ------------------------------------------------------

    def gamma_mode(self) -> str:
        g = self.gamma
        if isinstance(g, str) and g.lower() in ("auto", "inf", "preset"):
            return g.lower()
        return "value"

    def gamma_value(self) -> float | None:
        """Numeric gamma (``inf`` for HJB), or ``None`` for bisection."""
        mode = self.gamma_mode()
        if mode == "auto":
            return None
        if mode == "inf":
            return math.inf
        if mode == "preset":
            if self.problem == "oracle_1d":
                return 2.0
            return PRESET_GAMMA[self.problem]
        try:
            g = float(self.gamma)
        except (TypeError, ValueError):
            raise ConfigError(f"gamma must be a number, 'inf', 'auto' or 'preset', got {self.gamma!r}") from None
        if not g > 0:
            raise ConfigError("gamma must be positive")
        return g

    def build_problem(self) -> ParabolicProblem | None:
        if self.problem == "oracle_1d":
            return None
        try:
            p = make_problem(self.problem, **self.preset_args)
            ov = {}
            for k, v in self.overrides.items():
                if k in _INTERVAL_FIELDS and v is not None:
                    v = Interval(float(v[0]), float(v[1]))
                elif k == "initial_condition":
                    v = _initial_condition(v)
                ov[k] = v
            return dataclasses.replace(p, **ov)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid problem definition: {exc}") from exc

    def scenario_specs(self) -> list[ScenarioSpec]:
        out = []
        for i, raw in enumerate(self.scenarios or [{"name": "undisturbed"}]):
            if not isinstance(raw, dict):
                raise ConfigError(f"scenario {i} must be a mapping")
            sig = raw.get("signal", {}) or {}
            try:
                spec = ScenarioSpec(
                    str(raw.get("name", f"scenario{i}")),
                    SignalSpec(**sig),
                    _initial_condition(raw["initial_condition"]) if raw.get("initial_condition") else None,
                )
            except TypeError as exc:
                raise ConfigError(f"scenario {i}: {exc}") from exc
            out.append(spec)
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _initial_condition(v) -> InitialCondition:
    if isinstance(v, InitialCondition):
        return v
    if isinstance(v, str):
        return InitialCondition(v)
    if isinstance(v, dict):
        try:
            return InitialCondition(**v)
        except TypeError as exc:
            raise ConfigError(f"bad initial condition {v!r}") from exc
    raise ConfigError(f"bad initial condition {v!r}")


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: RunConfig, path) -> Path:
    """Write the fully resolved config (reloadable with :func:`load_config`)."""
    path = Path(path)
    data = cfg.to_dict()
    for sc in data["scenarios"]:
        ic = sc.get("initial_condition") if isinstance(sc, dict) else None
        if isinstance(ic, InitialCondition):
            sc["initial_condition"] = dataclasses.asdict(ic)
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def preset_config(name: str, **kw) -> RunConfig:
    """Default run config for a preset (desk-scale dimension and degree)."""
    cfg = RunConfig(problem=name, **kw)
    return cfg.validate()
