"""Affine constraint sets and the co-metric orthogonal projectors P and Q.

A constraint set encodes ``J(q) qdot + mu0(q) = 0``; in momenta this reads
``J(q) G(q) p + mu0(q) = 0``. The momentum space over q splits
G-orthogonally into the linear fiber C0 (image of P) and the span of the
rows of J (image of Q).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CompatibilityError, RankDeficiencyError, TransversalityError
from .geometry import MechanicalSystem, PhasePoint, _fd_step, cometric_at

RANK_TOL = 1e-10
COMPAT_MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class AffineConstraintSet:
    """Rows ``J(q)`` (m x n) and affine parts ``mu0(q)``; ``mu0=None`` means linear.

    ``constant`` declares both ``J`` and ``mu0`` independent of q, which lets
    the constrained vector field skip their time derivatives.
    """

    m: int
    J: Callable[[np.ndarray], np.ndarray]
    mu0: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant: bool = False
    label: str = ""

    @classmethod
    def empty(cls, label: str = "free") -> "AffineConstraintSet":
        return cls(0, lambda q: np.zeros((0, len(q))), None, True, label)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], mu0: Optional[Sequence[float]] = None, label: str = ""):
        J = np.array(rows, dtype=float)
        if J.ndim != 2:
            raise ValueError("constraint rows must form a matrix")
        J.setflags(write=False)
        if mu0 is None:
            return cls(J.shape[0], lambda q: J, None, True, label)
        b = np.array(mu0, dtype=float)
        b.setflags(write=False)
        return cls(J.shape[0], lambda q: J, lambda q: b, True, label)

    @property
    def linear(self) -> bool:
        return self.mu0 is None

    def rows(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.m == 0:
            return np.zeros((0, q.size))
        return np.asarray(self.J(q), dtype=float)

    def offset(self, q) -> np.ndarray:
        if self.mu0 is None:
            return np.zeros(self.m)
        return np.asarray(self.mu0(np.asarray(q, dtype=float)), dtype=float).reshape(self.m)


@dataclass(frozen=True)
class CompatibilityData:
    B: np.ndarray
    B_inverse: np.ndarray
    condition: float


@dataclass(frozen=True, eq=False)
class CriticalSurface:
    f: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, q) -> float:
        return float(self.f(np.asarray(q, dtype=float)))

    def differential(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(q), dtype=float)
        h = _fd_step(q)
        out = np.empty(q.size)
        for a in range(q.size):
            e = np.zeros(q.size)
            e[a] = h
            out[a] = (self.f(q + e) - self.f(q - e)) / (2 * h)
        return out


def check_rank(J: np.ndarray, operation: str = "compatibility", exc=RankDeficiencyError) -> None:
    if J.shape[0] == 0:
        return
    s = np.linalg.svd(J, compute_uv=False)
    if J.shape[0] > J.shape[1] or s[-1] <= RANK_TOL * max(s[0], 1e-300):
        raise exc(operation, f"constraint rows are dependent (rank < {J.shape[0]})")


def compatibility(system: MechanicalSystem, constraints: AffineConstraintSet, q) -> CompatibilityData:
    """B = J G J^t with G the co-metric, checked SPD and well conditioned."""
    J = constraints.rows(q)
    if J.shape[0] == 0:
        return CompatibilityData(np.zeros((0, 0)), np.zeros((0, 0)), 1.0)
    check_rank(J)
    B = J @ cometric_at(system, q) @ J.T
    B = 0.5 * (B + B.T)
    eig = np.linalg.eigvalsh(B)
    if eig[0] <= 0 or eig[-1] / eig[0] > COMPAT_MAX_CONDITION:
        raise CompatibilityError("compatibility", f"B is numerically singular (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
    Binv = np.linalg.inv(B)
    return CompatibilityData(B, 0.5 * (Binv + Binv.T), float(eig[-1] / eig[0]))


def projector_matrices(system: MechanicalSystem, constraints: AffineConstraintSet, q) -> tuple[np.ndarray, np.ndarray]:
    """(P, Q) as n x n matrices acting on covector columns, Q = J^t B^-1 J G."""
    n = system.n
    if constraints.m == 0:
        return np.eye(n), np.zeros((n, n))
    J = constraints.rows(q)
    data = compatibility(system, constraints, q)
    Q = J.T @ data.B_inverse @ J @ cometric_at(system, q)
    return np.eye(n) - Q, Q


def project_Q(system, constraints, q, x) -> np.ndarray:
    return projector_matrices(system, constraints, q)[1] @ np.asarray(x, dtype=float)


def project_P(system, constraints, q, x) -> np.ndarray:
    return projector_matrices(system, constraints, q)[0] @ np.asarray(x, dtype=float)


def affine_offset(system: MechanicalSystem, constraints: AffineConstraintSet, q) -> np.ndarray:
    """Q(Upsilon) = -J^t B^-1 mu0(q); the same for every admissible displacement."""
    if constraints.m == 0 or constraints.linear:
        return np.zeros(system.n)
    J = constraints.rows(q)
    data = compatibility(system, constraints, q)
    return -J.T @ (data.B_inverse @ constraints.offset(q))


def focusing_point(system: MechanicalSystem, constraints: AffineConstraintSet, u: PhasePoint) -> PhasePoint:
    """Unique point P(u) + Q(Upsilon) of the constraint fiber over the base point of u."""
    if constraints.m == 0:
        return u
    P, _ = projector_matrices(system, constraints, u.q)
    return PhasePoint(u.q, P @ u.p + affine_offset(system, constraints, u.q))


def constraint_residual(system: MechanicalSystem, constraints: AffineConstraintSet, x: PhasePoint) -> np.ndarray:
    if constraints.m == 0:
        return np.zeros(0)
    return constraints.rows(x.q) @ (cometric_at(system, x.q) @ x.p) + constraints.offset(x.q)


def stack(
    first: AffineConstraintSet,
    rows: Callable[[np.ndarray], np.ndarray],
    count: int,
    offsets: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    constant: bool = False,
    label: str = "",
    exc=RankDeficiencyError,
) -> AffineConstraintSet:
    """Append ``count`` rows (with optional affine parts) to a constraint set.

    The rank of the stacked rows is checked at every evaluation and failures
    raise ``exc``.
    """

    def J(q):
        extra = np.asarray(rows(q), dtype=float).reshape(count, -1)
        out = np.vstack([first.rows(q), extra]) if first.m else extra
        check_rank(out, label or "stack", exc)
        return out

    mu0 = None
    if not (first.linear and offsets is None):

        def mu0(q):
            extra = np.zeros(count) if offsets is None else np.asarray(offsets(q), dtype=float).reshape(count)
            return np.concatenate([first.offset(q), extra])

    return AffineConstraintSet(first.m + count, J, mu0, constant and first.constant, label)


def trace_constraints(system: MechanicalSystem, constraints: AffineConstraintSet, surface: CriticalSurface) -> AffineConstraintSet:
    """Constraints plus the velocity condition d_qf(qdot) = 0.

    The appended row is checked for independence at each evaluation point;
    dependence raises :class:`TransversalityError`.
    """
    return stack(
        constraints,
        surface.differential,
        1,
        label=f"trace({constraints.label})" if constraints.label else "trace",
        exc=TransversalityError,
    )


def instantaneous_projectors(system: MechanicalSystem, inst_constraints: AffineConstraintSet, q, x) -> tuple[np.ndarray, np.ndarray]:
    """(P_inst(x), Q_inst(x)) for an instantaneous constraint set along N."""
    P, Q = projector_matrices(system, inst_constraints, q)
    x = np.asarray(x, dtype=float)
    return P @ x, Q @ x
