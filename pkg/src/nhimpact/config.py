"""Run configuration: JSON schema, parsing, and construction of the
discontinuous system it describes. See README.md for the schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .constraints import AffineConstraintSet, CriticalSurface
from .dynamics import IntegrationConfig
from .errors import ConfigError
from .expr import ExpressionError, compile_expression, compile_matrix, compile_vector
from .geometry import ConfigChart, MechanicalSystem, PhasePoint
from .impact import DiscontinuousSystem, Mode, Side, SideData
from .scenarios import SCENARIOS, Scenario, build


@dataclass(frozen=True)
class RunConfig:
    scenario: Optional[str] = None
    scenario_params: dict = field(default_factory=dict)
    system: Optional[dict] = None
    q0: Optional[list] = None
    p0: Optional[list] = None
    side: Optional[str] = None
    mode: Optional[str] = None
    t_end: Optional[float] = None
    dt: float = 1e-3
    event_tolerance: float = 1e-12
    boundary_order_tolerance: float = 1e-7
    max_tangency_order: int = 3
    reproject: bool = False
    max_branches: int = 8
    max_iterations: int = 64
    max_events: int = 10000
    output_dir: str = "."
    trajectory_file: str = "trajectory.csv"
    events_file: str = "events.jsonl"

    def __post_init__(self):
        if (self.scenario is None) == (self.system is None):
            raise ConfigError("exactly one of 'scenario' and 'system' must be given")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.system is not None and self.t_end is None:
            raise ConfigError("inline systems need 't_end'")
        if self.t_end is not None and not self.t_end >= 0:
            raise ConfigError("'t_end' must be >= 0")
        if not self.dt > 0:
            raise ConfigError("'dt' must be positive")
        if self.event_tolerance <= 0 or self.boundary_order_tolerance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_branches < 1:
            raise ConfigError("'max_branches' must be >= 1")
        if self.mode is not None and self.mode not in ("elastic", "inelastic"):
            raise ConfigError("'mode' must be 'elastic' or 'inelastic'")
        if self.side is not None:
            try:
                Side.parse(self.side)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        tol = data.pop("tolerances", {}) or {}
        for src, dst in (("event", "event_tolerance"), ("boundary_order", "boundary_order_tolerance"), ("max_tangency_order", "max_tangency_order")):
            if src in tol:
                data.setdefault(dst, tol[src])
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def updated(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "scenario" in changes:
            changes.setdefault("system", None)
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def integration(self) -> IntegrationConfig:
        return IntegrationConfig(
            dt=self.dt,
            event_tolerance=self.event_tolerance,
            boundary_order_tolerance=self.boundary_order_tolerance,
            max_tangency_order=self.max_tangency_order,
            reproject=self.reproject,
        )


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything a run needs, resolved from a config."""

    dsys: DiscontinuousSystem
    chart: ConfigChart
    start: PhasePoint
    side: Side
    t_end: float
    scenario: Optional[Scenario] = None


def _system_from(entry: dict, base: Optional[dict], chart: ConfigChart, params) -> MechanicalSystem:
    names = chart.coordinate_names
    metric = entry.get("metric", base.get("metric") if base else None)
    if metric is None:
        metric = np.eye(chart.n).tolist()
    potential = entry.get("potential", base.get("potential", 0) if base else 0)
    mfn, const = compile_matrix(metric, names, params)
    vfn = compile_expression(potential, names, params)
    flat = isinstance(potential, (int, float)) and float(potential) == 0.0
    if const:
        return MechanicalSystem.constant(chart, mfn(np.zeros(chart.n)), None if flat else vfn)
    return MechanicalSystem(chart, mfn, vfn, flat_potential=flat)


def _constraints_from(entry: Optional[dict], chart: ConfigChart, params, label: str) -> AffineConstraintSet:
    if not entry or not entry.get("rows"):
        return AffineConstraintSet.empty()
    names = chart.coordinate_names
    rows = entry["rows"]
    if any(len(r) != chart.n for r in rows):
        raise ConfigError(f"{label}: every constraint row needs {chart.n} entries")
    jfn, jconst = compile_matrix(rows, names, params)
    mu0 = entry.get("mu0")
    if mu0 is None:
        return AffineConstraintSet(len(rows), jfn, None, jconst, label)
    if len(mu0) != len(rows):
        raise ConfigError(f"{label}: 'mu0' needs one entry per row")
    mfn, mconst = compile_vector(mu0, names, params)
    return AffineConstraintSet(len(rows), jfn, mfn, jconst and mconst, label)


def _inline(system: dict) -> tuple[DiscontinuousSystem, ConfigChart]:
    names = system.get("coordinates")
    if not names:
        raise ConfigError("inline system needs 'coordinates'")
    wrap = system.get("wrap", [])
    unknown = set(wrap) - set(names)
    if unknown:
        raise ConfigError(f"'wrap' names unknown coordinates: {', '.join(sorted(map(str, unknown)))}")
    chart = ConfigChart(len(names), tuple(names), tuple(name in wrap for name in names))
    params = system.get("parameters", {})
    if "surface" not in system:
        raise ConfigError("inline system needs 'surface'")
    surface = CriticalSurface(compile_expression(system["surface"], chart.coordinate_names, params))
    shared = _system_from(system, None, chart, params)
    sides: dict[str, Optional[SideData]] = {}
    for key in ("plus", "minus"):
        if key in system and system[key] is None:
            sides[key] = None
            continue
        entry = system.get(key, {}) or {}
        own = "metric" in entry or "potential" in entry
        mech = _system_from(entry, system, chart, params) if own else shared
        cons = _constraints_from(entry.get("constraints"), chart, params, f"{key}.constraints")
        inst = _constraints_from(entry.get("inst"), chart, params, f"{key}.inst") if entry.get("inst") else None
        sides[key] = SideData(mech, cons, inst)
    try:
        dsys = DiscontinuousSystem(
            surface,
            sides["plus"],
            sides["minus"],
            plus_sign=int(system.get("plus_sign", 1)),
            constraints_follow_transition=bool(system.get("constraints_follow_transition", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return dsys, chart


def _vector(values, n: int, name: str) -> np.ndarray:
    if isinstance(values, str):
        values = [v for v in values.replace(" ", "").split(",") if v]
    try:
        arr = np.array([float(v) for v in values])
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a list of numbers") from None
    if arr.shape != (n,):
        raise ConfigError(f"'{name}' needs {n} entries, got {arr.size}")
    return arr


def resolve(config: RunConfig) -> Setup:
    """Build the system and initial state described by ``config``."""
    try:
        if config.scenario is not None:
            sc = build(config.scenario, **config.scenario_params)
            dsys, chart = sc.system, sc.system.data(sc.initial_side).system.chart
            q0 = sc.initial.q if config.q0 is None else config.q0
            p0 = sc.initial.p if config.p0 is None else config.p0
            side = sc.initial_side if config.side is None else Side.parse(config.side)
            t_end = sc.t_end if config.t_end is None else config.t_end
        else:
            sc = None
            dsys, chart = _inline(config.system)
            if config.q0 is None or config.p0 is None:
                raise ConfigError("inline systems need 'q0' and 'p0'")
            q0, p0, t_end = config.q0, config.p0, config.t_end
            side = Side.parse(config.side) if config.side is not None else dsys.side_at(_vector(q0, chart.n, "q0"))
    except (ExpressionError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if config.mode is not None:
        dsys = dsys.with_mode(Mode(config.mode))
    if not dsys.present(side):
        raise ConfigError(f"initial side {side.symbol} is a wall")
    start = PhasePoint(_vector(q0, chart.n, "q0"), _vector(p0, chart.n, "p0"))
    return Setup(dsys, chart, start, side, float(t_end), sc)

