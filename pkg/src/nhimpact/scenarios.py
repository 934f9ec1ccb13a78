"""Ready-made discontinuous systems: a sphere meeting a rough region, a
sphere hitting a wall, a sphere on a table whose spin rate jumps, and two
rolling wheels joined by a telescopic rod.

Sphere coordinates are ``(x, y, q1, q2, q3)`` with ``q1..q3`` the
quasi-coordinates whose velocities are the angular velocities, treated as
ordinary chart coordinates with a constant diagonal metric.

``reference`` holds closed-form values for regression checks; the system
itself is always built from the generic constraint machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .constraints import AffineConstraintSet, CriticalSurface
from .geometry import ConfigChart, MechanicalSystem, PhasePoint
from .impact import DiscontinuousSystem, Mode, Side, SideData


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    params: dict[str, float]
    system: DiscontinuousSystem
    initial: PhasePoint
    initial_side: Side
    t_end: float
    reference: dict[str, Any] = field(default_factory=dict)


SPHERE_CHART = ConfigChart(5, ("x", "y", "q1", "q2", "q3"))


def sphere_system(k2: float) -> MechanicalSystem:
    return MechanicalSystem.constant(SPHERE_CHART, np.diag([1.0, 1.0, k2, k2, k2]))


def rolling_rows(r: float) -> np.ndarray:
    # xdot - r w_y = 0, ydot + r w_x = 0
    return np.array([[1.0, 0, 0, -r, 0], [0, 1.0, r, 0, 0]])


def rolling_momentum(r: float, k2: float, vx: float, vy: float, w3: float = 0.0, omega: float = 0.0, q=None) -> np.ndarray:
    """Momentum of a rolling sphere with center velocity (vx, vy) on a table spinning at ``omega``."""
    x, y = (0.0, 0.0) if q is None else (q[0], q[1])
    # rolling: vx - r w_y = -omega y, vy + r w_x = omega x
    wy = (vx + omega * y) / r
    wx = (omega * x - vy) / r
    return np.array([vx, vy, k2 * wx, k2 * wy, k2 * w3])


def _sphere_projector(r: float, k2: float) -> np.ndarray:
    s = r * r + k2
    return np.array(
        [
            [r * r / s, 0, 0, r / s, 0],
            [0, r * r / s, -r / s, 0, 0],
            [0, -r * k2 / s, k2 / s, 0, 0],
            [r * k2 / s, 0, 0, k2 / s, 0],
            [0, 0, 0, 0, 1.0],
        ]
    )


def _sphere_focus_table(r: float, k2: float) -> Callable[[np.ndarray], np.ndarray]:
    s = r * r + k2

    def table(p0):
        px, py, p1, p2, p3 = p0
        return np.array(
            [
                (r * r * px + r * p2) / s,
                (r * r * py - r * p1) / s,
                (-r * k2 * py + k2 * p1) / s,
                (r * k2 * px + k2 * p2) / s,
                p3,
            ]
        )

    return table


def rolling_sphere_rough(r: float = 1.0, k2: float = 0.4) -> Scenario:
    """Plane smooth for x < 0, perfectly rough for x > 0."""
    if r <= 0 or k2 <= 0:
        raise ValueError("r and k2 must be positive")
    system = sphere_system(k2)
    surface = CriticalSurface(lambda q: q[0], lambda q: np.array([1.0, 0, 0, 0, 0]))
    dsys = DiscontinuousSystem(
        surface,
        plus=SideData(system, AffineConstraintSet.from_rows(rolling_rows(r), label="rolling")),
        minus=SideData(system, AffineConstraintSet.empty()),
        mode=Mode.ELASTIC,
    )
    return Scenario(
        "rolling_sphere_rough",
        {"r": r, "k2": k2},
        dsys,
        PhasePoint([-1.0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0]),
        Side.MINUS,
        3.0,
        {"projector": _sphere_projector(r, k2), "focus": _sphere_focus_table(r, k2)},
    )


def _wall_inst_projector(r: float, k2: float) -> Callable[[np.ndarray], np.ndarray]:
    def proj(lam):
        lx, ly, l1, l2, l3 = lam
        a = (r * lx + l2) / (r * r + k2)
        b = (-r * ly + l1 - l3) / (r * r + 2 * k2)
        return a * np.array([r, 0, 0, k2, 0]) + b * np.array([0, -r, k2, 0, -k2])

    return proj


def _wall_inst_table(r: float, k2: float) -> Callable[[np.ndarray], np.ndarray]:
    def table(p0):
        px, py, _, _, p3 = p0
        w = ((r * r + k2) * py + r * p3) / (r * r + 2 * k2)
        return np.array([px, w, -k2 * w / r, k2 * px / r, k2 * w / r])

    return table


def sphere_wall(r: float = 1.0, k2: float = 0.4, d: float = 1.0, mode: Mode | str = Mode.ELASTIC) -> Scenario:
    """Rolling sphere in x < d; at the wall x = d the contact imposes ydot - r w_z = 0."""
    if r <= 0 or k2 <= 0 or d <= 0:
        raise ValueError("r, k2 and d must be positive")
    system = sphere_system(k2)
    rows = rolling_rows(r)
    inst_rows = np.vstack([rows, [0, 1.0, 0, 0, -r]])
    surface = CriticalSurface(lambda q: q[0] - d, lambda q: np.array([1.0, 0, 0, 0, 0]))
    dsys = DiscontinuousSystem(
        surface,
        plus=SideData(
            system,
            AffineConstraintSet.from_rows(rows, label="rolling"),
            AffineConstraintSet.from_rows(inst_rows, label="rolling+wall"),
        ),
        minus=None,
        mode=Mode(mode),
        plus_sign=-1,
    )
    q0 = np.zeros(5)
    p0 = rolling_momentum(r, k2, 1.0, 0.5, 0.3)
    return Scenario(
        "sphere_wall",
        {"r": r, "k2": k2, "d": d},
        dsys,
        PhasePoint(q0, p0),
        Side.PLUS,
        3.0,
        {
            "projector": _sphere_projector(r, k2),
            "inst_projector": _wall_inst_projector(r, k2),
            "inst_table": _wall_inst_table(r, k2),
            "reflective_coefficient": lambda px0: -2.0 * (r * r + k2) / (r * r) * px0,
        },
    )


def rotating_table_constraints(r: float, omega: float) -> AffineConstraintSet:
    rows = rolling_rows(r)
    rows.setflags(write=False)
    return AffineConstraintSet(
        2,
        lambda q: rows,
        lambda q: np.array([omega * q[1], -omega * q[0]]),
        constant=False,
        label=f"rolling(omega={omega:g})",
    )


def rotating_table(r: float = 1.0, k2: float = 0.4, omega_minus: float = 1.0, omega_plus: float = 2.0) -> Scenario:
    """Table spin switches between omega_minus and omega_plus whenever the center crosses x = y."""
    if not omega_minus < omega_plus:
        raise ValueError("omega_minus must be smaller than omega_plus")
    system = sphere_system(k2)
    surface = CriticalSurface(lambda q: q[0] - q[1], lambda q: np.array([1.0, -1.0, 0, 0, 0]))
    dsys = DiscontinuousSystem(
        surface,
        plus=SideData(system, rotating_table_constraints(r, omega_plus)),
        minus=SideData(system, rotating_table_constraints(r, omega_minus)),
        mode=Mode.ELASTIC,
        constraints_follow_transition=True,
    )
    s = r * r + k2

    def offset(omega, q):
        x, y = q[0], q[1]
        return omega * k2 / s * np.array([-y, x, r * x, r * y, 0.0])

    def det_character(px0, py0, x0, y0):
        return px0 - py0 + k2 / s * (x0 + y0) * (omega_minus - omega_plus)

    q0 = np.array([-1.0, 0.0, 0, 0, 0])
    p0 = rolling_momentum(r, k2, 1.0, 0.0, 0.0, omega_minus, q0)
    return Scenario(
        "rotating_table",
        {"r": r, "k2": k2, "omega_minus": omega_minus, "omega_plus": omega_plus},
        dsys,
        PhasePoint(q0, p0),
        Side.MINUS,
        3.0,
        {"projector": _sphere_projector(r, k2), "offset": offset, "det_character": det_character},
    )


WHEELS_CHART = ConfigChart(4, ("x1", "x2", "theta1", "theta2"), (False, False, True, True))


def rod_length(q, r1: float, r2: float) -> float:
    return float(np.hypot(r2 - r1, q[1] - q[0]))


def two_wheeled(r1: float = 1.0, r2: float = 2.0, a: float = 1.5, b: float = 3.0, mode: Mode | str = Mode.ELASTIC) -> Scenario:
    """Wheels of radii r1 < r2 rolling on a line, rod length confined to [a, b].

    The boundary function is min(l - a, b - l): positive inside, with the
    active sheet picked by proximity.
    """
    if not (0 < r1 < r2 and 0 < a < b):
        raise ValueError("need 0 < r1 < r2 and 0 < a < b")
    if a <= r2 - r1:
        raise ValueError("a must exceed r2 - r1 or the lower stop is unreachable")

    def f(q):
        ell = rod_length(q, r1, r2)
        return min(ell - a, b - ell)

    def grad(q):
        ell = rod_length(q, r1, r2)
        dl = (q[1] - q[0]) / ell * np.array([-1.0, 1.0, 0, 0])
        return dl if ell - a <= b - ell else -dl

    system = MechanicalSystem.constant(WHEELS_CHART, np.eye(4))
    rows = np.array([[1.0, 0, -r1, 0], [0, 1.0, 0, -r2]])
    dsys = DiscontinuousSystem(
        CriticalSurface(f, grad),
        plus=SideData(system, AffineConstraintSet.from_rows(rows, label="rolling")),
        minus=None,
        mode=Mode(mode),
    )
    projector = np.array(
        [
            [r1**2 / (1 + r1**2), 0, r1 / (1 + r1**2), 0],
            [0, r2**2 / (1 + r2**2), 0, r2 / (1 + r2**2)],
            [r1 / (1 + r1**2), 0, 1 / (1 + r1**2), 0],
            [0, r2 / (1 + r2**2), 0, 1 / (1 + r2**2)],
        ]
    )
    v1, v2 = 0.2, 1.0
    p0 = np.array([v1, v2, v1 / r1, v2 / r2])
    return Scenario(
        "two_wheeled",
        {"r1": r1, "r2": r2, "a": a, "b": b},
        dsys,
        PhasePoint([0.0, 2.0, 0.0, 0.0], p0),
        Side.PLUS,
        6.0,
        {"projector": projector, "length": lambda q: rod_length(q, r1, r2)},
    )


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "rolling_sphere_rough": rolling_sphere_rough,
    "sphere_wall": sphere_wall,
    "rotating_table": rotating_table,
    "two_wheeled": two_wheeled,
}


def build(name: str, **params) -> Scenario:
    try:
        builder = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return builder(**params)
