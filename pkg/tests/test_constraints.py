import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import nearest_on_fiber, random_linear_system, random_spd
from nhimpact.constraints import (
    AffineConstraintSet,
    CriticalSurface,
    affine_offset,
    compatibility,
    constraint_residual,
    focusing_point,
    instantaneous_projectors,
    project_P,
    project_Q,
    projector_matrices,
    trace_constraints,
)
from nhimpact.errors import CompatibilityError, RankDeficiencyError, TransversalityError
from nhimpact.geometry import ConfigChart, MechanicalSystem, PhasePoint, cometric_at, kinetic_energy, pairing
from nhimpact.scenarios import (
    build,
    rolling_momentum,
    rolling_rows,
    rotating_table_constraints,
    sphere_system,
)

R, K2 = 1.0, 0.4
DX = np.array([1.0, 0, 0, 0, 0])


@pytest.fixture
def sphere():
    return sphere_system(K2), AffineConstraintSet.from_rows(rolling_rows(R))


@pytest.fixture
def wheels():
    sc = build("two_wheeled")
    return sc.system.plus.system, sc.system.plus.constraints


def test_empty_compatibility():
    data = compatibility(sphere_system(K2), AffineConstraintSet.empty(), np.zeros(5))
    assert data.B.shape == (0, 0)


def test_sphere_compatibility(sphere):
    assert_allclose(compatibility(*sphere, np.zeros(5)).B, np.diag([3.5, 3.5]), atol=1e-14)


def test_wheels_compatibility(wheels):
    assert_allclose(compatibility(*wheels, np.zeros(4)).B, np.diag([2.0, 5.0]), atol=1e-14)


def test_duplicate_rows_raise_rank_error(sphere):
    cs = AffineConstraintSet.from_rows([[1, 0, 0, -1, 0], [1, 0, 0, -1, 0]])
    with pytest.raises(RankDeficiencyError):
        compatibility(sphere[0], cs, np.zeros(5))


def test_ill_conditioned_b_raises():
    system = MechanicalSystem.constant(ConfigChart(2), np.eye(2))
    cs = AffineConstraintSet.from_rows([[1.0, 0.0], [1.0, 1e-7]])
    with pytest.raises(CompatibilityError):
        compatibility(system, cs, np.zeros(2))


class TestProjectors:
    def test_q_of_dx(self, sphere):
        assert_allclose(project_Q(*sphere, np.zeros(5), DX), [2 / 7, 0, 0, -2 / 7, 0], atol=1e-15)

    def test_p_of_dx(self, sphere):
        assert_allclose(project_P(*sphere, np.zeros(5), DX), [5 / 7, 0, 0, 2 / 7, 0], atol=1e-15)

    def test_sphere_matrix(self, sphere):
        P, _ = projector_matrices(*sphere, np.zeros(5))
        assert_allclose(P, build("rolling_sphere_rough").reference["projector"], atol=1e-15)

    def test_wheels_matrix(self, wheels):
        P, _ = projector_matrices(*wheels, np.zeros(4))
        expected = [[0.5, 0, 0.5, 0], [0, 0.8, 0, 0.4], [0.5, 0, 0.5, 0], [0, 0.4, 0, 0.2]]
        assert_allclose(P, expected, atol=1e-15)

    def test_kernel_and_fixed_space(self, sphere):
        p = rolling_momentum(R, K2, 0.3, -1.1, 0.7)
        assert_allclose(project_Q(*sphere, np.zeros(5), p), 0.0, atol=1e-15)
        assert_allclose(project_P(*sphere, np.zeros(5), p), p, atol=1e-15)

    def test_no_constraints(self, sphere):
        x = np.arange(5.0)
        assert_allclose(project_Q(sphere[0], AffineConstraintSet.empty(), np.zeros(5), x), 0.0)
        assert_allclose(project_P(sphere[0], AffineConstraintSet.empty(), np.zeros(5), x), x)

    def test_algebra_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            system, cs = random_linear_system(rng)
            n = system.n
            q = rng.normal(size=n)
            P, Q = projector_matrices(system, cs, q)
            assert np.max(np.abs(P @ P - P)) < 1e-10
            assert np.max(np.abs(Q @ Q - Q)) < 1e-10
            assert np.max(np.abs(P @ Q)) < 1e-10 and np.max(np.abs(Q @ P)) < 1e-10
            assert np.max(np.abs(P + Q - np.eye(n))) < 1e-15
            a, b = rng.normal(size=(2, n))
            assert abs(pairing(system, q, P @ a, Q @ b)) < 1e-10 * (1 + np.linalg.norm(a) * np.linalg.norm(b))

    def test_instantaneous_matches_closed_form(self):
        sc = build("sphere_wall")
        sd = sc.system.plus
        rng = np.random.default_rng(3)
        for lam in rng.normal(size=(20, 5)):
            P_inst, Q_inst = instantaneous_projectors(sd.system, sd.inst, np.zeros(5), lam)
            assert_allclose(P_inst, sc.reference["inst_projector"](lam), atol=1e-10)
            assert_allclose(P_inst + Q_inst, lam, atol=1e-14)

    def test_instantaneous_py_component(self):
        sc = build("sphere_wall")
        sd = sc.system.plus
        lam = focusing_point(sd.system, sd.constraints, PhasePoint(np.zeros(5), [0.4, 1.3, -0.2, 0.5, 0.9])).p
        P_inst, _ = instantaneous_projectors(sd.system, sd.inst, np.zeros(5), lam)
        assert P_inst[1] == pytest.approx((1.4 * lam[1] + lam[4]) / 1.8, abs=1e-14)

    def test_instantaneous_fixes_members(self):
        sd = build("sphere_wall").system.plus
        lam = focusing_point(sd.system, sd.inst, PhasePoint(np.zeros(5), [0.4, 1.3, -0.2, 0.5, 0.9]))
        P_inst, _ = instantaneous_projectors(sd.system, sd.inst, lam.q, lam.p)
        assert_allclose(P_inst, lam.p, atol=1e-14)


class TestAffineOffset:
    def test_linear_is_zero(self, sphere):
        assert_allclose(affine_offset(*sphere, np.ones(5)), 0.0)

    def test_rotating_table(self):
        system = sphere_system(K2)
        cs = rotating_table_constraints(R, 1.0)
        q = np.array([1.0, 0, 0, 0, 0])
        off = affine_offset(system, cs, q)
        # translational part as displayed; rotational part fixed by constraint satisfaction
        assert_allclose(off[:2], [0, 2 / 7], atol=1e-15)
        assert_allclose(constraint_residual(system, cs, PhasePoint(q, off)), 0.0, atol=1e-15)
        assert_allclose(off, build("rotating_table").reference["offset"](1.0, q), atol=1e-15)

    def test_independent_of_displacement(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            system, lin = random_linear_system(rng)
            n, m = system.n, lin.m
            mu = rng.normal(size=m)
            cs = AffineConstraintSet.from_rows(lin.rows(None), mu)
            q = np.zeros(n)
            A = cs.rows(q) @ cometric_at(system, q)
            base = np.linalg.lstsq(A, -mu, rcond=None)[0]
            other = base + (np.eye(n) - np.linalg.pinv(A) @ A) @ rng.normal(size=n)
            assert_allclose(A @ other, -mu, atol=1e-10)
            P, Q = projector_matrices(system, cs, q)
            assert_allclose(Q @ base, affine_offset(system, cs, q), atol=1e-10)
            assert_allclose(Q @ other, affine_offset(system, cs, q), atol=1e-10)


class TestFocusing:
    def test_member_is_fixed(self, sphere):
        u = PhasePoint(np.zeros(5), rolling_momentum(R, K2, 1.0, 2.0, -0.5))
        assert_allclose(focusing_point(*sphere, u).p, u.p, atol=1e-15)

    def test_sphere_unit_px(self, sphere):
        u = focusing_point(*sphere, PhasePoint(np.zeros(5), DX))
        assert_allclose(u.p, [5 / 7, 0, 0, 2 / 7, 0], atol=1e-15)

    def test_keeps_configuration(self, sphere):
        u = PhasePoint(np.arange(5.0), np.ones(5))
        assert_allclose(focusing_point(*sphere, u).q, u.q)

    def test_matches_least_squares(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            system, lin = random_linear_system(rng)
            cs = AffineConstraintSet.from_rows(lin.rows(None), rng.normal(size=lin.m))
            q = np.zeros(system.n)
            u = PhasePoint(q, rng.normal(size=system.n))
            G = cometric_at(system, q)
            ref = nearest_on_fiber(G, cs.rows(q) @ G, -cs.offset(q), u.p)
            assert_allclose(focusing_point(system, cs, u).p, ref, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_idempotent_and_on_fiber(self, seed):
        rng = np.random.default_rng(seed)
        system, lin = random_linear_system(rng)
        cs = AffineConstraintSet.from_rows(lin.rows(None), rng.normal(size=lin.m))
        u = PhasePoint(np.zeros(system.n), rng.normal(size=system.n))
        once = focusing_point(system, cs, u)
        assert np.max(np.abs(constraint_residual(system, cs, once))) < 1e-10
        assert_allclose(focusing_point(system, cs, once).p, once.p, atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_carnot(self, seed):
        rng = np.random.default_rng(seed)
        system, cs = random_linear_system(rng)
        u = PhasePoint(np.zeros(system.n), rng.normal(size=system.n))
        assert kinetic_energy(system, focusing_point(system, cs, u)) <= kinetic_energy(system, u) + 1e-15


class TestResidual:
    def test_empty(self, sphere):
        assert constraint_residual(sphere[0], AffineConstraintSet.empty(), PhasePoint(np.zeros(5), DX)).shape == (0,)

    def test_rolling_state(self, sphere):
        x = PhasePoint(np.zeros(5), rolling_momentum(R, K2, 0.8, -0.3, 1.0))
        assert_allclose(constraint_residual(*sphere, x), 0.0, atol=1e-15)


class TestTrace:
    def test_free_plane(self):
        system = MechanicalSystem.constant(ConfigChart(2), np.eye(2))
        tr = trace_constraints(system, AffineConstraintSet.empty(), CriticalSurface(lambda q: q[0]))
        assert tr.m == 1
        assert_allclose(tr.rows(np.zeros(2)), [[1.0, 0.0]], atol=1e-9)

    def test_sphere_rank(self, sphere):
        tr = trace_constraints(*sphere, CriticalSurface(lambda q: q[0], lambda q: DX))
        assert np.linalg.matrix_rank(tr.rows(np.zeros(5))) == 3

    def test_wheels_equal_momenta(self):
        sc = build("two_wheeled")
        sd = sc.system.plus
        tr = trace_constraints(sd.system, sd.constraints, sc.system.surface)
        q = np.array([0.0, 1.3, 0.2, 0.1])
        u = focusing_point(sd.system, tr, PhasePoint(q, [0.3, -0.8, 1.1, 0.4]))
        assert u.p[0] == pytest.approx(u.p[1], abs=1e-12)
        v = cometric_at(sd.system, q) @ u.p
        assert abs(sc.system.surface.differential(q) @ v) < 1e-12

    def test_dependent_row_raises(self):
        system = MechanicalSystem.constant(ConfigChart(2), np.eye(2))
        cs = AffineConstraintSet.from_rows([[1.0, 0.0]])
        tr = trace_constraints(system, cs, CriticalSurface(lambda q: q[0], lambda q: np.array([1.0, 0.0])))
        with pytest.raises(TransversalityError):
            tr.rows(np.zeros(2))

    def test_fiber_velocities(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            system, lin = random_linear_system(rng)
            n = system.n
            if lin.m == n - 1:
                continue
            a = rng.normal(size=n)
            cs = AffineConstraintSet.from_rows(lin.rows(None), rng.normal(size=lin.m))
            tr = trace_constraints(system, cs, CriticalSurface(lambda q, a=a: float(a @ q), lambda q, a=a: a))
            q = np.zeros(n)
            u = focusing_point(system, tr, PhasePoint(q, rng.normal(size=n)))
            v = cometric_at(system, q) @ u.p
            assert abs(a @ v) < 1e-9
            assert_allclose(cs.rows(q) @ v + cs.offset(q), 0.0, atol=1e-9)


def test_random_spd_helper_is_spd():
    g = random_spd(np.random.default_rng(0), 6)
    assert np.all(np.linalg.eigvalsh(g) > 0)
