"""Simulation driver: integrate branches, apply transitions at N, fork on
multiple decisive points, and write the trajectory CSV and event log."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, Setup, resolve
from .constraints import (
    check_rank,
    compatibility,
    constraint_residual,
    focusing_point,
    project_P,
    trace_constraints,
)
from .dynamics import Terminal, integrate, make_field
from .errors import ConfigError, NumericalError, UndecidedError
from .geometry import PhasePoint, hamiltonian, pairing
from .impact import Branch, DynamicsTag, Side, governing_set, impact_state, transition

TRANSVERSALITY_SAMPLES = 16
INITIAL_RESIDUAL_TOL = 1e-8


def format_number(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise NumericalError("serialize", f"non-finite value {x!r} in output")
    text = format(x, ".17g")
    return "0" if text == "-0" else text


def dumps(obj) -> str:
    """Compact JSON with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class _Active:
    time: float
    ident: int
    point: PhasePoint
    side: Side
    tag: DynamicsTag
    constraint_side: Side

    def key(self):
        return (self.time, self.ident)


@dataclass
class RunResult:
    rows: list[list] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    header: list[str] = field(default_factory=list)
    trajectory_path: Optional[Path] = None
    events_path: Optional[Path] = None
    branch_count: int = 1


def _row_values(setup: Setup, br: _Active, t: float, x: PhasePoint) -> list:
    dsys = setup.dsys
    system, cs = governing_set(dsys, br.side, br.tag, br.constraint_side)
    res = constraint_residual(system, cs, x)
    rmax = float(np.max(np.abs(res))) if res.size else 0.0
    return [t, br.ident, br.side.symbol, *x.q, *x.p, hamiltonian(system, x), rmax, dsys.surface.value(x.q)]


def _header(n: int) -> list[str]:
    return ["t", "branch", "side", *(f"q_{i}" for i in range(1, n + 1)), *(f"p_{i}" for i in range(1, n + 1)), "H", "residual_max", "f"]


def _branch_record(setup: Setup, b: Branch) -> dict:
    system, cs = governing_set(setup.dsys, b.side, b.tag, b.constraint_side)
    res = constraint_residual(system, cs, b.point)
    return {
        "q": b.point.q.tolist(),
        "p": b.point.p.tolist(),
        "side": b.side.symbol,
        "constraint_side": b.constraint_side.symbol,
        "tag": b.tag.value,
        "classification": b.classification.kind.value,
        "order": b.classification.order,
        "energy_after": hamiltonian(system, b.point),
        "sequence_length": b.sequence_length,
        "residual_max": float(np.max(np.abs(res))) if res.size else 0.0,
    }


def simulate(config: RunConfig, setup: Optional[Setup] = None) -> RunResult:
    """Run the simulation in memory; :func:`run` also writes the files."""
    setup = setup or resolve(config)
    dsys, icfg = setup.dsys, config.integration()
    result = RunResult(header=_header(setup.chart.n))
    t_end = setup.t_end
    if t_end <= 0:
        return result
    root = _Active(0.0, 0, setup.start, setup.side, DynamicsTag.CONSTRAINED, setup.side)
    result.rows.append(_row_values(setup, root, 0.0, root.point))
    heap = [(root.key(), root)]
    next_id, live = 1, 1
    while heap:
        _, br = heapq.heappop(heap)
        system, cs = governing_set(dsys, br.side, br.tag, br.constraint_side)
        field_ = make_field(system, cs)
        project = (lambda x, s=system, c=cs: focusing_point(s, c, x)) if config.reproject and cs.m else None
        surface = dsys.surface if br.tag is DynamicsTag.CONSTRAINED else None
        steps = int(math.ceil((t_end - br.time) / icfg.dt)) + 2
        seg = integrate(field_, br.point, surface, dsys.inside_sign(br.side), _with_steps(icfg, steps), br.time, t_end, project)
        for t, x in zip(seg.times[1:], seg.points[1:]):
            result.rows.append(_row_values(setup, br, t, x))
        if seg.terminal is Terminal.STEP_LIMIT:
            raise NumericalError("integrate", f"branch {br.ident} stopped at t={seg.end_time:g} before t_end")
        if seg.terminal is not Terminal.BOUNDARY:
            live -= 1
            continue
        if len(result.events) >= config.max_events:
            raise UndecidedError("run", f"more than {config.max_events} impacts (chattering?)")
        t_hit = seg.end_time
        imp = impact_state(dsys, seg.hit, br.side, br.constraint_side)
        tr = transition(dsys, imp, icfg, config.max_iterations)
        kept = list(tr.branches)
        room = config.max_branches - (live - 1)
        pruned = len(kept) - max(room, 0)
        kept = kept[: max(room, 0)]
        live += len(kept) - 1
        result.events.append(
            {
                "time": t_hit,
                "branch": br.ident,
                "q": imp.y.q.tolist(),
                "p": imp.y.p.tolist(),
                "side_before": imp.side.symbol,
                "constraint_side_before": imp.constraint_side.symbol,
                "regime": tr.regime,
                "energy_before": imp.energy,
                "branches": [_branch_record(setup, b) for b in kept],
                "trapped": tr.trapped,
                "pruned": max(pruned, 0),
            }
        )
        for i, b in enumerate(kept):
            ident = br.ident if i == 0 else next_id
            if i:
                next_id += 1
            child = _Active(t_hit, ident, b.point, b.side, b.tag, b.constraint_side)
            result.events[-1]["branches"][i]["id"] = ident
            result.rows.append(_row_values(setup, child, t_hit, b.point))
            heapq.heappush(heap, (child.key(), child))
    result.branch_count = next_id
    return result


def _with_steps(icfg, steps):
    return replace(icfg, max_steps=max(1, steps))


def run(config: RunConfig) -> RunResult:
    """Simulate and write ``trajectory.csv`` and ``events.jsonl`` under ``output_dir``."""
    setup = resolve(config)
    result = simulate(config, setup)
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    result.trajectory_path = out / config.trajectory_file
    result.events_path = out / config.events_file
    lines = [",".join(result.header)]
    for row in result.rows:
        lines.append(",".join(v if isinstance(v, str) else str(v) if isinstance(v, int) else format_number(v) for v in row))
    result.trajectory_path.write_text("\n".join(lines) + "\n")
    result.events_path.write_text("".join(dumps(e) + "\n" for e in result.events))
    return result


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(ok), detail))

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def format(self) -> str:
        return "\n".join(f"{'ok  ' if c.ok else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else "") for c in self.checks)


def _guarded(report: ValidationReport, name: str, fn) -> None:
    try:
        detail = fn()
        report.add(name, True, detail or "")
    except (NumericalError, ValueError, ArithmeticError) as exc:
        report.add(name, False, str(exc))


def _points_on_surface(setup: Setup, count: int) -> list[np.ndarray]:
    """Newton-project perturbations of q0 onto f = 0."""
    rng = np.random.default_rng(0)
    surface, q0 = setup.dsys.surface, setup.start.q
    out = []
    for k in range(count):
        q = q0 + (0.0 if k == 0 else 1.0) * rng.normal(size=q0.size)
        for _ in range(50):
            val = surface.value(q)
            if abs(val) < 1e-12:
                break
            df = surface.differential(q)
            nn = float(df @ df)
            if nn == 0.0:
                break
            q = q - val / nn * df
        if abs(surface.value(q)) < 1e-9:
            out.append(q)
    return out


def validate(config: RunConfig) -> ValidationReport:
    """Check a configuration without running it. Never raises."""
    report = ValidationReport()
    try:
        setup = resolve(config)
    except (ConfigError, NumericalError, ValueError) as exc:
        report.add("config", False, str(exc))
        return report
    report.add("config", True, f"n={setup.chart.n}, side {setup.side.symbol}")
    dsys, q0 = setup.dsys, setup.start.q
    f0 = dsys.inside_sign(setup.side) * dsys.surface.value(q0)
    report.add("initial side", f0 >= -1e-12, f"oriented f = {f0:.3g}")
    for side in (Side.PLUS, Side.MINUS):
        sd = dsys.data_or_none(side)
        if sd is None:
            continue
        for label, cs in (("constraints", sd.constraints), ("inst", sd.inst)):
            if cs is None or cs.m == 0:
                continue
            name = f"{side.symbol} {label}"
            _guarded(report, f"{name} rank", lambda cs=cs: check_rank(np.atleast_2d(cs.rows(q0)), "validate"))
            _guarded(report, f"{name} compatibility", lambda sd=sd, cs=cs: f"cond {compatibility(sd.system, cs, q0).condition:.3g}")

    def initial_residual():
        system, cs = governing_set(dsys, setup.side, DynamicsTag.CONSTRAINED, setup.side)
        res = constraint_residual(system, cs, setup.start)
        worst = float(np.max(np.abs(res))) if res.size else 0.0
        if worst > INITIAL_RESIDUAL_TOL:
            raise ValueError(f"|residual| = {worst:.3g} exceeds {INITIAL_RESIDUAL_TOL:g}")
        return f"{worst:.3g}"

    _guarded(report, "initial residual", initial_residual)

    samples = _points_on_surface(setup, TRANSVERSALITY_SAMPLES)
    report.add("surface samples", bool(samples), f"{len(samples)} points on N")
    for side in (Side.PLUS, Side.MINUS):
        sd = dsys.data_or_none(side)
        if sd is None:
            continue

        def transversal(sd=sd):
            for q in samples:
                df = dsys.surface.differential(q)
                d = project_P(sd.system, sd.constraints, q, df)
                ratio = math.sqrt(max(pairing(sd.system, q, d, d), 0.0) / pairing(sd.system, q, df, df))
                if ratio < 1e-8:
                    raise ValueError(f"P(df) vanishes at q = {np.array2string(q, precision=4)}")
                for cs in (sd.constraints, sd.inst):
                    if cs is not None:
                        compatibility(sd.system, trace_constraints(sd.system, cs, dsys.surface), q)
            return f"{len(samples)} samples"

        _guarded(report, f"{side.symbol} transversality", transversal)
    return report
