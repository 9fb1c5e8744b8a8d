import time

import pytest

from modelsym.geodesic import sample_geodesics
from modelsym.model import ModelManifold

GEODESIC_LENGTH = 10.0


def builtin_manifolds():
    return {
        "euclidean2": ModelManifold.euclidean(2, r_max=20),
        "euclidean3": ModelManifold.euclidean(3, r_max=20),
        "hyperbolic2": ModelManifold.hyperbolic(2, r_max=20),
        "hyperbolic3": ModelManifold.hyperbolic(3, r_max=20),
        "paraboloid2": ModelManifold.paraboloid(2, r_max=20),
        "paraboloid3": ModelManifold.paraboloid(3, r_max=20),
    }


@pytest.fixture(scope="session")
def geodesic_batches():
    """100 seeded length-10 geodesics per built-in manifold, integrated once per session."""
    out = {}
    for name, M in builtin_manifolds().items():
        out[name] = (M, sample_geodesics(M, 100, GEODESIC_LENGTH, seed=3, start_radius=4.0))
    return out


@pytest.fixture(scope="session")
def scenario_reports():
    """First run of every built-in scenario: name -> (exit code, report text)."""
    from modelsym.cli import builtin_scenarios, dumps_report, load_config, run_scenario

    out = {}
    for name in builtin_scenarios():
        code, report = run_scenario(load_config(name))
        out[name] = (code, dumps_report(report))
    return out


ACCEPTANCE_LINES = []
SUITE_BUDGET = 60.0
_START = {}


def pytest_sessionstart(session):
    _START["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _START.get("t", time.perf_counter())
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    ok = elapsed < SUITE_BUDGET
    terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion 12: suite runtime {elapsed:.1f} s (< 60 s)")
    if not ok:
        terminalreporter._session.exitstatus = 1
