import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import random_spd
from nhimpact.errors import SingularMetricError
from nhimpact.geometry import (
    ConfigChart,
    MechanicalSystem,
    PhasePoint,
    anti_legendre,
    cometric_at,
    hamiltonian,
    kinetic_energy,
    legendre,
    metric_at,
    metric_derivative_at,
    potential_gradient_at,
)
from nhimpact.scenarios import sphere_system


def flat(n, potential=None):
    return MechanicalSystem.constant(ConfigChart(n), np.eye(n), potential)


def curved():
    """Polar-like metric on the plane: diag(1, 1 + q0^2)."""
    return MechanicalSystem(ConfigChart(2), lambda q: np.diag([1.0, 1.0 + q[0] ** 2]), lambda q: 0.5 * q[0] ** 2)


class TestChart:
    def test_default_names(self):
        chart = ConfigChart(3)
        assert chart.coordinate_names == ("q1", "q2", "q3")
        assert chart.wrap_flags == (False, False, False)

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError):
            ConfigChart(2, ("x", "x"))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ConfigChart(0)

    def test_wrap_only_touches_angles(self):
        chart = ConfigChart(2, ("x", "theta"), (False, True))
        assert_allclose(chart.wrap([7.0, 3 * np.pi / 2]), [7.0, -np.pi / 2])


class TestPhasePoint:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            PhasePoint([0.0, 1.0], [1.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            PhasePoint([np.nan], [0.0])

    def test_is_read_only(self):
        x = PhasePoint([0.0], [1.0])
        with pytest.raises(ValueError):
            x.p[0] = 2.0


class TestCometric:
    def test_identity(self):
        assert_allclose(cometric_at(flat(3), np.zeros(3)), np.eye(3))

    def test_sphere(self):
        G = cometric_at(sphere_system(0.4), np.zeros(5))
        assert_allclose(G, np.diag([1, 1, 2.5, 2.5, 2.5]), atol=1e-15)

    def test_random_spd(self, rng):
        g = random_spd(rng, 4)
        system = MechanicalSystem.constant(ConfigChart(4), g)
        G = cometric_at(system, np.zeros(4))
        assert np.max(np.abs(g @ G - np.eye(4))) < 1e-12

    def test_singular_metric_raises(self):
        system = MechanicalSystem.constant(ConfigChart(2), np.diag([1.0, 1e-14]))
        with pytest.raises(SingularMetricError) as err:
            cometric_at(system, np.zeros(2))
        assert err.value.operation == "cometric_at"

    def test_indefinite_metric_raises(self):
        system = MechanicalSystem(ConfigChart(2), lambda q: np.diag([1.0, -1.0]))
        with pytest.raises(SingularMetricError):
            cometric_at(system, np.zeros(2))

    def test_curved_inverse_everywhere(self, rng):
        system = curved()
        for q in rng.normal(size=(20, 2)):
            assert_allclose(metric_at(system, q) @ cometric_at(system, q), np.eye(2), atol=1e-10)


class TestEnergies:
    def test_zero_momentum(self):
        assert kinetic_energy(flat(3), PhasePoint(np.ones(3), np.zeros(3))) == 0.0

    def test_flat_plane(self):
        assert kinetic_energy(flat(2), PhasePoint([0, 0], [3, 4])) == pytest.approx(12.5)

    def test_sphere_unit_px(self):
        x = PhasePoint(np.zeros(5), [1, 0, 0, 0, 0])
        assert kinetic_energy(sphere_system(0.4), x) == pytest.approx(0.5)

    def test_hamiltonian_without_potential(self):
        x = PhasePoint([1.0, 2.0], [0.3, -0.4])
        assert hamiltonian(flat(2), x) == kinetic_energy(flat(2), x)

    def test_linear_potential(self):
        system = flat(1, potential=lambda q: q[0])
        assert hamiltonian(system, PhasePoint([2.0], [0.0])) == 2.0

    def test_hamiltonian_recomposes(self, rng):
        system = curved()
        for _ in range(10):
            x = PhasePoint(rng.normal(size=2), rng.normal(size=2))
            assert hamiltonian(system, x) == pytest.approx(kinetic_energy(system, x) + system.potential(x.q), abs=1e-15)

    def test_kinetic_positive_off_zero(self, rng):
        system = MechanicalSystem.constant(ConfigChart(5), random_spd(rng, 5))
        for p in rng.normal(size=(1000, 5)):
            assert kinetic_energy(system, PhasePoint(np.zeros(5), p)) > 0


class TestLegendre:
    def test_zero(self):
        assert_allclose(anti_legendre(curved(), PhasePoint([1.0, 1.0], [0.0, 0.0])), 0.0)

    def test_flat_is_identity(self):
        p = np.array([0.3, -1.2, 4.0])
        assert_allclose(anti_legendre(flat(3), PhasePoint(np.zeros(3), p)), p)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-3, 3), min_size=2, max_size=2),
        st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    )
    def test_round_trips(self, q, p):
        system = curved()
        x = PhasePoint(q, p)
        v = anti_legendre(system, x)
        assert_allclose(legendre(system, x.q, v), x.p, atol=1e-10)
        assert_allclose(anti_legendre(system, PhasePoint(q, legendre(system, x.q, p))), p, atol=1e-10)


class TestDerivatives:
    def test_metric_derivative_finite_difference(self):
        q = np.array([0.7, -0.2])
        dg = metric_derivative_at(curved(), q)
        expected = np.zeros((2, 2, 2))
        expected[0, 1, 1] = 2 * q[0]
        assert_allclose(dg, expected, atol=1e-8)

    def test_analytic_derivative_preferred(self):
        calls = []

        def dg(q):
            calls.append(q)
            return np.zeros((2, 2, 2))

        system = MechanicalSystem(ConfigChart(2), lambda q: np.eye(2), metric_derivative=dg)
        metric_derivative_at(system, np.zeros(2))
        assert calls

    def test_potential_gradient(self):
        assert_allclose(potential_gradient_at(curved(), np.array([1.5, 0.0])), [1.5, 0.0], atol=1e-8)

    def test_flat_potential_has_zero_gradient(self):
        assert_allclose(potential_gradient_at(flat(3), np.ones(3)), np.zeros(3))
