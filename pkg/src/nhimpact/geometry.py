"""Mechanical Hamiltonians H = T^ + V on a coordinate chart.

The metric g(q) acts on velocities, the co-metric G(q) = g(q)^-1 on momenta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularMetricError

MatrixFn = Callable[[np.ndarray], np.ndarray]
ScalarFn = Callable[[np.ndarray], float]

DEFAULT_MAX_CONDITION = 1e12


def _as_vector(values, n: Optional[int] = None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if n is not None and arr.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConfigChart:
    n: int
    coordinate_names: tuple[str, ...] = ()
    wrap_flags: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("chart dimension must be >= 1")
        names = tuple(self.coordinate_names) or tuple(f"q{i + 1}" for i in range(self.n))
        flags = tuple(bool(w) for w in self.wrap_flags) or (False,) * self.n
        if len(names) != self.n or len(flags) != self.n:
            raise ValueError("coordinate_names and wrap_flags must have length n")
        if len(set(names)) != self.n:
            raise ValueError("coordinate names must be unique")
        object.__setattr__(self, "coordinate_names", names)
        object.__setattr__(self, "wrap_flags", flags)

    def wrap(self, q: np.ndarray) -> np.ndarray:
        """Map angular coordinates into (-pi, pi]. Output only, never used in dynamics."""
        out = np.array(q, dtype=float)
        for i, w in enumerate(self.wrap_flags):
            if w:
                out[i] = np.pi - np.mod(np.pi - out[i], 2 * np.pi)
        return out


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = _as_vector(self.q)
        p = _as_vector(self.p, q.size)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size

    def with_momentum(self, p) -> "PhasePoint":
        return PhasePoint(self.q, p)

    def distance(self, other: "PhasePoint") -> float:
        return float(max(np.max(np.abs(self.q - other.q)), np.max(np.abs(self.p - other.p))))


def _zero_potential(q: np.ndarray) -> float:
    return 0.0


@dataclass(frozen=True, eq=False)
class MechanicalSystem:
    """Metric, potential and optional analytic derivatives.

    ``constant_metric`` lets the co-metric be computed once and skips metric
    derivatives entirely. Without ``metric_derivative`` or
    ``potential_gradient``, central differences with step
    ``1e-6 * max(1, |q|_inf)`` are used.
    """

    chart: ConfigChart
    metric: MatrixFn
    potential: ScalarFn = _zero_potential
    metric_derivative: Optional[MatrixFn] = None
    potential_gradient: Optional[MatrixFn] = None
    constant_metric: bool = False
    max_condition: float = DEFAULT_MAX_CONDITION
    flat_potential: bool = field(default=False, repr=False)

    @classmethod
    def constant(
        cls,
        chart: ConfigChart,
        matrix: Sequence[Sequence[float]],
        potential: Optional[ScalarFn] = None,
        potential_gradient: Optional[MatrixFn] = None,
    ) -> "MechanicalSystem":
        g = np.array(matrix, dtype=float)
        if g.shape != (chart.n, chart.n):
            raise ValueError(f"metric must be {chart.n}x{chart.n}")
        g.setflags(write=False)
        return cls(
            chart=chart,
            metric=lambda q: g,
            potential=potential or _zero_potential,
            potential_gradient=potential_gradient,
            constant_metric=True,
            flat_potential=potential is None,
        )

    @property
    def n(self) -> int:
        return self.chart.n

    @cached_property
    def _constant_cometric(self) -> np.ndarray:
        return _checked_inverse(self.metric(np.zeros(self.n)), self.max_condition)


def _checked_inverse(g: np.ndarray, max_condition: float) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, g.T, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(g)))):
        raise SingularMetricError("cometric_at", "metric is not symmetric")
    eig = np.linalg.eigvalsh(g)
    if eig[0] <= 0 or eig[-1] / eig[0] > max_condition:
        raise SingularMetricError(
            "cometric_at", f"metric not positive-definite or ill-conditioned (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})"
        )
    G = np.linalg.inv(g)
    return 0.5 * (G + G.T)


def metric_at(system: MechanicalSystem, q) -> np.ndarray:
    return np.asarray(system.metric(np.asarray(q, dtype=float)), dtype=float)


def cometric_at(system: MechanicalSystem, q) -> np.ndarray:
    """Co-metric G(q) = g(q)^-1, checked symmetric positive-definite."""
    if system.constant_metric:
        return system._constant_cometric
    return _checked_inverse(metric_at(system, q), system.max_condition)


def _fd_step(q: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(q))) if q.size else 1.0)


def metric_derivative_at(system: MechanicalSystem, q) -> np.ndarray:
    """Array of shape (n, n, n); entry [c] is dg/dq^c."""
    q = np.asarray(q, dtype=float)
    n = system.n
    if system.constant_metric:
        return np.zeros((n, n, n))
    if system.metric_derivative is not None:
        return np.asarray(system.metric_derivative(q), dtype=float)
    h = _fd_step(q)
    out = np.empty((n, n, n))
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        out[c] = (metric_at(system, q + e) - metric_at(system, q - e)) / (2 * h)
    return out


def potential_gradient_at(system: MechanicalSystem, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if system.flat_potential:
        return np.zeros(system.n)
    if system.potential_gradient is not None:
        return np.asarray(system.potential_gradient(q), dtype=float)
    h = _fd_step(q)
    grad = np.empty(system.n)
    for a in range(system.n):
        e = np.zeros(system.n)
        e[a] = h
        grad[a] = (system.potential(q + e) - system.potential(q - e)) / (2 * h)
    return grad


def pairing(system: MechanicalSystem, q, a, b) -> float:
    """Co-metric inner product G(q)(a, b) of two covectors."""
    return float(np.asarray(a) @ cometric_at(system, q) @ np.asarray(b))


def kinetic_energy(system: MechanicalSystem, x: PhasePoint) -> float:
    return 0.5 * pairing(system, x.q, x.p, x.p)


def hamiltonian(system: MechanicalSystem, x: PhasePoint) -> float:
    return kinetic_energy(system, x) + float(system.potential(x.q))


def anti_legendre(system: MechanicalSystem, x: PhasePoint) -> np.ndarray:
    """Velocity of a phase point, v = G(q) p."""
    return cometric_at(system, x.q) @ x.p


def legendre(system: MechanicalSystem, q, v) -> np.ndarray:
    """Momentum of a velocity, p = g(q) v."""
    return metric_at(system, q) @ np.asarray(v, dtype=float)
