import numpy as np
import pytest

from nhimpact import AffineConstraintSet, ConfigChart, MechanicalSystem


def random_spd(rng, n, spread=1.0):
    a = rng.normal(size=(n, n))
    return a @ a.T + (0.5 + spread * rng.random()) * np.eye(n)


def random_linear_system(rng, n=None, m=None):
    """Constant SPD metric with m independent constant constraint rows."""
    n = n or int(rng.integers(2, 7))
    m = m if m is not None else int(rng.integers(1, n))
    chart = ConfigChart(n, tuple(f"q{i}" for i in range(n)))
    system = MechanicalSystem.constant(chart, random_spd(rng, n))
    rows = rng.normal(size=(m, n))
    return system, AffineConstraintSet.from_rows(rows)


def nullspace(a, tol=1e-12):
    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > tol * s[0]))
    return vt[rank:].T


def nearest_on_fiber(G, A, b, p):
    """G-nearest point to p of {p' : A p' = b}, via a nullspace parametrization.

    Solves the reduced normal equations instead of the projector formula so
    it can serve as an independent check of focusing.
    """
    p0 = np.linalg.lstsq(A, b, rcond=None)[0]
    N = nullspace(A)
    if N.shape[1] == 0:
        return p0
    z = np.linalg.solve(N.T @ G @ N, -N.T @ G @ (p0 - p))
    return p0 + N @ z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
