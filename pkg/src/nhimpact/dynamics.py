"""Free and constrained Hamiltonian vector fields, RK4 integration with
boundary events, and in/out/trapping classification of boundary points."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .constraints import AffineConstraintSet, CriticalSurface, compatibility
from .geometry import (
    MechanicalSystem,
    PhasePoint,
    cometric_at,
    metric_derivative_at,
    potential_gradient_at,
)

DIRECTIONAL_STEP = 1e-6


@dataclass(frozen=True)
class PhaseVelocity:
    dq: np.ndarray
    dp: np.ndarray


VectorField = Callable[[PhasePoint], PhaseVelocity]


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 1e-3
    event_tolerance: float = 1e-12
    max_steps: int = 10**6
    boundary_order_tolerance: float = 1e-7
    max_tangency_order: int = 3
    derivative_step: float = 1e-3
    reproject: bool = False

    def __post_init__(self):
        if self.dt <= 0 or self.event_tolerance <= 0 or self.boundary_order_tolerance <= 0:
            raise ValueError("dt and tolerances must be positive")
        if self.max_tangency_order < 1:
            raise ValueError("max_tangency_order must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def _free_parts(system: MechanicalSystem, x: PhasePoint):
    G = cometric_at(system, x.q)
    v = G @ x.p
    dp = -potential_gradient_at(system, x.q)
    if not system.constant_metric:
        # -1/2 p^t dG_a p = +1/2 v^t dg_a v
        dg = metric_derivative_at(system, x.q)
        dp = dp + 0.5 * np.einsum("cab,a,b->c", dg, v, v)
    return G, v, dp


def free_field(system: MechanicalSystem, x: PhasePoint) -> PhaseVelocity:
    _, v, dp = _free_parts(system, x)
    return PhaseVelocity(v, dp)


def _along(fn, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Directional derivative of a q-dependent array along v (central difference)."""
    h = DIRECTIONAL_STEP * max(1.0, float(np.max(np.abs(q)))) / max(1.0, float(np.max(np.abs(v))))
    return (np.asarray(fn(q + h * v), dtype=float) - np.asarray(fn(q - h * v), dtype=float)) / (2 * h)


def reaction_multipliers(system: MechanicalSystem, constraints: AffineConstraintSet, x: PhasePoint) -> np.ndarray:
    """Multipliers lam such that dp = dp_free + J^t lam keeps the residual stationary."""
    G, v, dp_free = _free_parts(system, x)
    J = constraints.rows(x.q)
    rate = J @ (G @ dp_free)
    if not system.constant_metric:
        dg_v = np.einsum("c,cab->ab", v, metric_derivative_at(system, x.q))
        rate = rate - J @ (G @ (dg_v @ v))
    if not constraints.constant:
        rate = rate + _along(constraints.rows, x.q, v) @ v
        if not constraints.linear:
            rate = rate + _along(constraints.offset, x.q, v)
    return -compatibility(system, constraints, x.q).B_inverse @ rate


def constrained_field(system: MechanicalSystem, constraints: AffineConstraintSet, x: PhasePoint) -> PhaseVelocity:
    if constraints.m == 0:
        return free_field(system, x)
    _, v, dp_free = _free_parts(system, x)
    lam = reaction_multipliers(system, constraints, x)
    return PhaseVelocity(v, dp_free + constraints.rows(x.q).T @ lam)


def make_field(system: MechanicalSystem, constraints: Optional[AffineConstraintSet] = None) -> VectorField:
    if constraints is None or constraints.m == 0:
        return lambda x: free_field(system, x)
    return lambda x: constrained_field(system, constraints, x)


def rk4_step(field: VectorField, x: PhasePoint, h: float) -> PhasePoint:
    k1 = field(x)
    x2 = PhasePoint(x.q + 0.5 * h * k1.dq, x.p + 0.5 * h * k1.dp)
    k2 = field(x2)
    x3 = PhasePoint(x.q + 0.5 * h * k2.dq, x.p + 0.5 * h * k2.dp)
    k3 = field(x3)
    x4 = PhasePoint(x.q + h * k3.dq, x.p + h * k3.dp)
    k4 = field(x4)
    return PhasePoint(
        x.q + h / 6 * (k1.dq + 2 * k2.dq + 2 * k3.dq + k4.dq),
        x.p + h / 6 * (k1.dp + 2 * k2.dp + 2 * k3.dp + k4.dp),
    )


class Terminal(str, Enum):
    NONE = "none"
    BOUNDARY = "boundary-hit"
    STEP_LIMIT = "step-limit"


@dataclass
class TrajectorySegment:
    times: list[float] = field(default_factory=list)
    points: list[PhasePoint] = field(default_factory=list)
    terminal: Terminal = Terminal.NONE
    hit: Optional[PhasePoint] = None
    side: Optional[int] = None

    @property
    def end_time(self) -> float:
        return self.times[-1]

    @property
    def end(self) -> PhasePoint:
        return self.points[-1]


def _refine_hit(field, surface, inside_sign, x0: PhasePoint, h: float, tol: float) -> tuple[float, PhasePoint]:
    """Bisect the sub-step length in (0, h] until |f| < tol."""
    lo, hi = 0.0, h
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm = rk4_step(field, x0, mid)
        fm = inside_sign * surface.value(xm.q)
        if abs(fm) < tol:
            return mid, xm
        if fm > 0:
            lo = mid
        else:
            hi = mid
            best = (mid, xm)
        if hi - lo <= 4 * np.finfo(float).eps * max(h, 1.0):
            break
    # interval collapsed above float resolution; take the outer end
    return best if best is not None else (h, rk4_step(field, x0, h))


def integrate(
    field: VectorField,
    start: PhasePoint,
    surface: Optional[CriticalSurface],
    inside_sign: int,
    config: IntegrationConfig,
    t0: float = 0.0,
    t_end: Optional[float] = None,
    project: Optional[Callable[[PhasePoint], PhasePoint]] = None,
) -> TrajectorySegment:
    """Fixed-step RK4 until the oriented surface function ``inside_sign * f``
    crosses zero, ``t_end`` is reached, or ``max_steps`` is exhausted.

    Event detection is armed only once the trajectory is strictly inside
    (oriented f > event_tolerance), so a start on N does not re-trigger.
    ``project`` is the optional post-step re-projection.
    """
    seg = TrajectorySegment([t0], [start], side=inside_sign)
    tol = config.event_tolerance
    x, t = start, t0
    armed = surface is not None and inside_sign * surface.value(x.q) > tol
    for k in range(config.max_steps):
        if t_end is not None and t >= t_end:
            return seg
        t_next = t0 + (k + 1) * config.dt
        if t_end is not None and t_next >= t_end - 1e-9 * config.dt:
            t_next = t_end
        h = t_next - t
        xn = rk4_step(field, x, h)
        if project is not None:
            xn = project(xn)
        if surface is not None:
            fn = inside_sign * surface.value(xn.q)
            if armed and fn <= tol:
                if abs(fn) < tol:
                    tau, xh = h, xn
                else:
                    tau, xh = _refine_hit(field, surface, inside_sign, x, h, tol)
                    if project is not None:
                        xh = project(xh)
                seg.times.append(t + tau)
                seg.points.append(xh)
                seg.terminal = Terminal.BOUNDARY
                seg.hit = xh
                return seg
            if fn > tol:
                armed = True
        t, x = t_next, xn
        seg.times.append(t)
        seg.points.append(x)
    if t_end is None or t < t_end:
        seg.terminal = Terminal.STEP_LIMIT
    return seg


class Kind(str, Enum):
    IN = "in"
    OUT = "out"
    TRAPPING = "trapping"


@dataclass(frozen=True)
class Classification:
    kind: Kind
    order: Optional[int]
    derivatives: tuple[float, ...]

    @property
    def decisive(self) -> bool:
        return self.kind is not Kind.OUT


def surface_derivative(field: VectorField, y: PhasePoint, surface: CriticalSurface, k: int, h: float) -> float:
    """X^k(f) at y for k >= 1.

    X(f) = d_qf(dq) is exact; each further order is a central difference of
    the previous one along the field with time step ``h``.
    """

    def lie(depth: int, x: PhasePoint) -> float:
        if depth == 0:
            return float(surface.differential(x.q) @ field(x).dq)
        v = field(x)
        fwd = PhasePoint(x.q + h * v.dq, x.p + h * v.dp)
        bwd = PhasePoint(x.q - h * v.dq, x.p - h * v.dp)
        return (lie(depth - 1, fwd) - lie(depth - 1, bwd)) / (2 * h)

    return lie(k - 1, y)


def classify_boundary(
    field: VectorField,
    y: PhasePoint,
    surface: CriticalSurface,
    inside_sign: int,
    config: IntegrationConfig,
) -> Classification:
    """First j with |X^(j+1)(f)| above tolerance decides in (> 0) or out (< 0),
    with f oriented positive inside. Nothing above tolerance up to j_max is
    reported as trapping."""
    derivs: list[float] = []
    for j in range(config.max_tangency_order + 1):
        value = inside_sign * surface_derivative(field, y, surface, j + 1, config.derivative_step)
        derivs.append(value)
        if abs(value) > config.boundary_order_tolerance:
            return Classification(Kind.IN if value > 0 else Kind.OUT, j, tuple(derivs))
    return Classification(Kind.TRAPPING, None, tuple(derivs))
