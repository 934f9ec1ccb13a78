"""Impulsive transitions across a critical surface N = {f = 0}.

Given an impact state reached from side eps, the transition computes every
decisive point: the post-impact states from which motion continues, each
with the side it continues on and the constraint set governing it.
Four regimes are covered: elastic or inelastic, with either a smooth
Hamiltonian and jumping constraints or a Hamiltonian that jumps across N
(including walls, where one side is absent).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

from .constraints import (
    AffineConstraintSet,
    CriticalSurface,
    constraint_residual,
    focusing_point,
    project_P,
    trace_constraints,
)
from .dynamics import Classification, IntegrationConfig, Kind, classify_boundary, make_field
from .errors import TransversalityError, UndecidedError
from .geometry import MechanicalSystem, PhasePoint, hamiltonian, kinetic_energy, pairing

MAX_ITERATIONS = 64
SAME_POINT_TOL = 1e-9
ENERGY_FLOOR = 1e-14
TRANSVERSALITY_TOL = 1e-10


class Side(IntEnum):
    PLUS = 1
    MINUS = -1

    @property
    def opposite(self) -> "Side":
        return Side(-int(self))

    @property
    def symbol(self) -> str:
        return "+" if self is Side.PLUS else "-"

    @classmethod
    def parse(cls, text) -> "Side":
        if isinstance(text, Side):
            return text
        key = str(text).strip().lower()
        if key in ("+", "plus", "+1", "1"):
            return cls.PLUS
        if key in ("-", "minus", "-1"):
            return cls.MINUS
        raise ValueError(f"unknown side {text!r}")


class Mode(str, Enum):
    ELASTIC = "elastic"
    INELASTIC = "inelastic"


class DynamicsTag(str, Enum):
    CONSTRAINED = "constrained"
    TRACE = "trace"
    INST_TRACE = "inst_trace"


@dataclass(frozen=True, eq=False)
class SideData:
    system: MechanicalSystem
    constraints: AffineConstraintSet
    inst: Optional[AffineConstraintSet] = None

    @property
    def impact_set(self) -> AffineConstraintSet:
        """Instantaneous constraints when present, otherwise the regular ones."""
        return self.inst if self.inst is not None else self.constraints


@dataclass(frozen=True, eq=False)
class DiscontinuousSystem:
    """Two-sided data along N = {f = 0}.

    Side PLUS is where ``plus_sign * f > 0``. A missing side is a wall
    (infinite Hamiltonian there).
    """

    surface: CriticalSurface
    plus: Optional[SideData]
    minus: Optional[SideData]
    mode: Mode = Mode.ELASTIC
    plus_sign: int = 1
    constraints_follow_transition: bool = False

    def __post_init__(self):
        if self.plus is None and self.minus is None:
            raise ValueError("at least one side must be present")
        if self.plus_sign not in (1, -1):
            raise ValueError("plus_sign must be +1 or -1")
        object.__setattr__(self, "mode", Mode(self.mode))

    def present(self, side: Side) -> bool:
        return self.data_or_none(side) is not None

    def data_or_none(self, side: Side) -> Optional[SideData]:
        return self.plus if side is Side.PLUS else self.minus

    def data(self, side: Side) -> SideData:
        sd = self.data_or_none(side)
        if sd is None:
            raise ValueError(f"side {side.symbol} is absent (wall)")
        return sd

    def inside_sign(self, side: Side) -> int:
        return self.plus_sign * int(side)

    def side_at(self, q) -> Side:
        return Side.PLUS if self.plus_sign * self.surface.value(q) >= 0 else Side.MINUS

    @property
    def is_boundary(self) -> bool:
        return self.plus is None or self.minus is None

    @property
    def smooth_hamiltonian(self) -> bool:
        return not self.is_boundary and self.plus.system is self.minus.system

    @property
    def smooth_constraints(self) -> bool:
        return self.is_boundary or self.plus.constraints is self.minus.constraints

    def with_mode(self, mode) -> "DiscontinuousSystem":
        return replace(self, mode=Mode(mode))


@dataclass(frozen=True)
class ImpactState:
    y: PhasePoint
    side: Side
    constraint_side: Side
    energy: float


def impact_state(dsys: DiscontinuousSystem, y: PhasePoint, side, constraint_side=None) -> ImpactState:
    side = Side.parse(side)
    cside = side if constraint_side is None else Side.parse(constraint_side)
    return ImpactState(y, side, cside, hamiltonian(dsys.data(side).system, y))


@dataclass(frozen=True)
class Branch:
    point: PhasePoint
    side: Side
    tag: DynamicsTag
    classification: Classification
    constraint_side: Side
    sequence_length: int


@dataclass(frozen=True)
class TransitionResult:
    branches: tuple[Branch, ...]
    regime: str

    @property
    def trapped(self) -> bool:
        return not self.branches


def governing_set(dsys: DiscontinuousSystem, side: Side, tag: DynamicsTag, constraint_side: Optional[Side] = None):
    """(system, constraint set) of the vector field attached to a branch."""
    sd = dsys.data(side)
    if tag is DynamicsTag.CONSTRAINED:
        cs = dsys.data(constraint_side if constraint_side is not None else side).constraints
        return sd.system, cs
    if tag is DynamicsTag.TRACE:
        return sd.system, trace_constraints(sd.system, sd.constraints, dsys.surface)
    if sd.inst is None:
        raise ValueError(f"side {side.symbol} has no instantaneous constraints")
    return sd.system, trace_constraints(sd.system, sd.inst, dsys.surface)


def branch_field(dsys: DiscontinuousSystem, branch: Branch):
    return make_field(*governing_set(dsys, branch.side, branch.tag, branch.constraint_side))


def _classify(dsys, u: PhasePoint, side: Side, system, constraints, config) -> Classification:
    return classify_boundary(make_field(system, constraints), u, dsys.surface, dsys.inside_sign(side), config)


def characteristic_direction(dsys: DiscontinuousSystem, side, y: PhasePoint) -> np.ndarray:
    """P_eps(d_qf): direction of the constrained characteristic through y."""
    side = Side.parse(side)
    sd = dsys.data(side)
    df = dsys.surface.differential(y.q)
    d = project_P(sd.system, sd.constraints, y.q, df)
    scale = np.sqrt(pairing(sd.system, y.q, df, df))
    if np.sqrt(max(pairing(sd.system, y.q, d, d), 0.0)) < TRANSVERSALITY_TOL * scale:
        raise TransversalityError("characteristic_direction", "P(df) vanishes: constraints not transversal to N")
    return d


def reflective_coefficient(dsys: DiscontinuousSystem, side, y: PhasePoint) -> float:
    """Nonzero c with H_eps(y + c P_eps(df)) = H_eps(y)."""
    side = Side.parse(side)
    system = dsys.data(side).system
    d = characteristic_direction(dsys, side, y)
    return -2.0 * pairing(system, y.q, y.p, d) / pairing(system, y.q, d, d)


def refractive_coefficients(dsys: DiscontinuousSystem, from_side, y: PhasePoint) -> tuple[float, ...]:
    """Roots c of H_opp(y + c P_eps(df)) = H_eps(y); empty means total reflection."""
    from_side = Side.parse(from_side)
    if not dsys.present(from_side.opposite):
        return ()
    src = dsys.data(from_side).system
    dst = dsys.data(from_side.opposite).system
    d = characteristic_direction(dsys, from_side, y)
    q = y.q
    a = pairing(dst, q, d, d)
    b = pairing(dst, q, y.p, d)
    # T_dst(y) - T_src(y) with the potential jump folded in
    delta = kinetic_energy(dst, y) - kinetic_energy(src, y) + float(dst.potential(q)) - float(src.potential(q))
    disc = b * b - 2.0 * a * delta
    scale = 1e-13 * (b * b + abs(2.0 * a * delta)) + 1e-300
    if disc < -scale:
        return ()
    if disc <= scale:
        return (-b / a,)
    root = np.sqrt(disc)
    return ((-b + root) / a, (-b - root) / a)


def _seen(point: PhasePoint, side: Side, visited) -> bool:
    return any(s is side and point.distance(v) < SAME_POINT_TOL for v, s in visited)


def decisive_elastic_constraint_change(
    dsys: DiscontinuousSystem,
    impact: ImpactState,
    config: IntegrationConfig = IntegrationConfig(),
    max_iterations: int = MAX_ITERATIONS,
) -> TransitionResult:
    """Alternating focusing onto the opposite side's (instantaneous) constraints
    until an in or trapping point appears; a revisited point or vanishing
    kinetic energy means the trajectory is trapped."""
    regime = "elastic/constraint-change"
    if dsys.constraints_follow_transition:
        return _constraint_switch(dsys, impact, config, regime)
    cur, side = impact.y, impact.side
    visited = [(cur, side)]
    for k in range(1, max_iterations + 1):
        nxt = side.opposite
        sd = dsys.data(nxt)
        u = focusing_point(sd.system, sd.impact_set, cur)
        cls = _classify(dsys, u, nxt, sd.system, sd.constraints, config)
        if cls.decisive:
            return TransitionResult((Branch(u, nxt, DynamicsTag.CONSTRAINED, cls, nxt, k + 1),), regime)
        if _seen(u, nxt, visited) or kinetic_energy(sd.system, u) < ENERGY_FLOOR:
            return TransitionResult((), regime)
        visited.append((u, nxt))
        cur, side = u, nxt
    raise UndecidedError("decisive_elastic_constraint_change", f"no decision after {max_iterations} iterations")


def _constraint_switch(dsys, impact: ImpactState, config, regime) -> TransitionResult:
    # The opposite constraint set takes over everywhere; the point continues
    # on whichever side it enters.
    target = impact.constraint_side.opposite
    td = dsys.data(target)
    u = focusing_point(td.system, td.impact_set, impact.y)
    for side in (impact.side.opposite, impact.side):
        system = dsys.data(side).system
        cls = _classify(dsys, u, side, system, td.constraints, config)
        if cls.decisive:
            return TransitionResult((Branch(u, side, DynamicsTag.CONSTRAINED, cls, target, 2),), regime)
    return TransitionResult((), regime)


def _dedupe_append(branches: list[Branch], branch: Branch) -> None:
    if not any(b.side is branch.side and b.tag is branch.tag and b.point.distance(branch.point) < SAME_POINT_TOL for b in branches):
        branches.append(branch)


def decisive_elastic_discontinuous_H(
    dsys: DiscontinuousSystem,
    impact: ImpactState,
    config: IntegrationConfig = IntegrationConfig(),
    max_iterations: int = MAX_ITERATIONS,
) -> TransitionResult:
    """Breadth-first search over reflective and refractive steps.

    With the same linear constraints on both sides and no instantaneous
    constraints, the decisive points are read directly off the constrained
    characteristic through y.
    """
    regime = "elastic/discontinuous-H"
    y, eps = impact.y, impact.side
    no_inst = all(sd is None or sd.inst is None for sd in (dsys.plus, dsys.minus))
    sd0 = dsys.data(eps)
    if dsys.smooth_constraints and sd0.constraints.linear and no_inst:
        d = characteristic_direction(dsys, eps, y)
        cands = [(eps, reflective_coefficient(dsys, eps, y))]
        cands += [(eps.opposite, c) for c in refractive_coefficients(dsys, eps, y)]
        branches: list[Branch] = []
        for side, c in cands:
            u = PhasePoint(y.q, y.p + c * d)
            sd = dsys.data(side)
            cls = _classify(dsys, u, side, sd.system, sd.constraints, config)
            if cls.decisive:
                _dedupe_append(branches, Branch(u, side, DynamicsTag.CONSTRAINED, cls, side, 2))
        return TransitionResult(tuple(branches), regime)

    branches = []
    visited = [(y, eps)]
    queue = deque([(y, eps, 1)])
    expansions = 0
    while queue:
        cur, side, depth = queue.popleft()
        expansions += 1
        if expansions > max_iterations:
            raise UndecidedError("decisive_elastic_discontinuous_H", f"no decision after {max_iterations} iterations")
        for u, nside in _elastic_steps(dsys, cur, side):
            sd = dsys.data(nside)
            cls = _classify(dsys, u, nside, sd.system, sd.constraints, config)
            if cls.decisive:
                _dedupe_append(branches, Branch(u, nside, DynamicsTag.CONSTRAINED, cls, nside, depth + 1))
            elif not _seen(u, nside, visited) and kinetic_energy(sd.system, u) >= ENERGY_FLOOR:
                visited.append((u, nside))
                queue.append((u, nside, depth + 1))
    return TransitionResult(tuple(branches), regime)


def _elastic_steps(dsys, cur: PhasePoint, side: Side):
    """End points of every reflective and refractive step starting at (cur, side)."""
    d = characteristic_direction(dsys, side, cur)
    sd = dsys.data(side)
    for c in _unique((0.0, reflective_coefficient(dsys, side, cur))):
        yield focusing_point(sd.system, sd.impact_set, PhasePoint(cur.q, cur.p + c * d)), side
    if dsys.present(side.opposite):
        od = dsys.data(side.opposite)
        for c in refractive_coefficients(dsys, side, cur):
            yield focusing_point(od.system, od.impact_set, PhasePoint(cur.q, cur.p + c * d)), side.opposite


def _unique(values) -> list[float]:
    out: list[float] = []
    for v in values:
        if not any(abs(v - w) <= 1e-14 * max(1.0, abs(w)) for w in out):
            out.append(v)
    return out


def _trace_target(dsys, side: Side):
    sd = dsys.data(side)
    tag = DynamicsTag.INST_TRACE if sd.inst is not None else DynamicsTag.TRACE
    return sd, tag, governing_set(dsys, side, tag)[1]


def decisive_inelastic_constraint_change(
    dsys: DiscontinuousSystem,
    impact: ImpactState,
    config: IntegrationConfig = IntegrationConfig(),
) -> TransitionResult:
    """Focus y onto the opposite side's (instantaneous) trace constraints."""
    regime = "inelastic/constraint-change"
    side = impact.side.opposite
    sd, tag, tr = _trace_target(dsys, side)
    u = focusing_point(sd.system, tr, impact.y)
    cls = _classify(dsys, u, side, sd.system, tr, config)
    branches = (Branch(u, side, tag, cls, side, 2),) if cls.decisive else ()
    return TransitionResult(branches, regime)


def decisive_inelastic_discontinuous_H(
    dsys: DiscontinuousSystem,
    impact: ImpactState,
    config: IntegrationConfig = IntegrationConfig(),
) -> TransitionResult:
    """Reflected and refracted falling points.

    Each characteristic point at the right energy level is focused onto the
    trace constraints of the side it lands on. For a wall with linear
    constraints every reflected candidate focuses to the same point, so only
    y itself is projected.
    """
    regime = "inelastic/discontinuous-H"
    y, eps = impact.y, impact.side
    sd, tag, tr = _trace_target(dsys, eps)
    if dsys.is_boundary and sd.constraints.linear and sd.impact_set.linear:
        u = focusing_point(sd.system, tr, y)
        cls = _classify(dsys, u, eps, sd.system, tr, config)
        return TransitionResult((Branch(u, eps, tag, cls, eps, 2),) if cls.decisive else (), regime)

    d = characteristic_direction(dsys, eps, y)
    cands = [(eps, c) for c in _unique((0.0, reflective_coefficient(dsys, eps, y)))]
    cands += [(eps.opposite, c) for c in refractive_coefficients(dsys, eps, y)]
    branches: list[Branch] = []
    for side, c in cands:
        tsd, ttag, ttr = _trace_target(dsys, side)
        u = focusing_point(tsd.system, ttr, PhasePoint(y.q, y.p + c * d))
        cls = _classify(dsys, u, side, tsd.system, ttr, config)
        if cls.decisive:
            _dedupe_append(branches, Branch(u, side, ttag, cls, side, 2))
    return TransitionResult(tuple(branches), regime)


def transition(
    dsys: DiscontinuousSystem,
    impact: ImpactState,
    config: IntegrationConfig = IntegrationConfig(),
    max_iterations: int = MAX_ITERATIONS,
) -> TransitionResult:
    """Dispatch on mode and on whether the Hamiltonian jumps across N."""
    if dsys.mode is Mode.ELASTIC:
        if dsys.smooth_hamiltonian:
            return decisive_elastic_constraint_change(dsys, impact, config, max_iterations)
        return decisive_elastic_discontinuous_H(dsys, impact, config, max_iterations)
    if dsys.smooth_hamiltonian:
        return decisive_inelastic_constraint_change(dsys, impact, config)
    return decisive_inelastic_discontinuous_H(dsys, impact, config)


def branch_residual(dsys: DiscontinuousSystem, branch: Branch) -> np.ndarray:
    system, cs = governing_set(dsys, branch.side, branch.tag, branch.constraint_side)
    return constraint_residual(system, cs, branch.point)
