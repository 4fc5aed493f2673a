from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from parasym import build_interval, catalog_get, find_equilibrium
from parasym.domain import Field
from parasym.dynamics import heteroclinic_from, stable_even_perturbation
from parasym.equilibria import equilibrium_sweep
from parasym.solver import SolverParams, evolve

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# (criterion number, passed, detail) collected by the acceptance module
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def remark_b():
    return catalog_get("remark_b")


@pytest.fixture(scope="session")
def logistic():
    return catalog_get("logistic")


@pytest.fixture(scope="session")
def interval_3pi():
    # 768 cells: divisible by 12, so 2*pi is a half-grid value
    return build_interval(3 * np.pi, 768)


@pytest.fixture(scope="session")
def xi_record(remark_b, interval_3pi):
    guess = interval_3pi.field(lambda x: 1.1 * (1 + np.cos(x)))
    return find_equilibrium(remark_b, interval_3pi, guess, name="xi")


@pytest.fixture(scope="session")
def remark_b_sweep(remark_b, interval_3pi):
    return equilibrium_sweep(remark_b, interval_3pi, 50, seed=0)


@pytest.fixture(scope="session")
def heteroclinic_plus(xi_record, remark_b):
    return heteroclinic_from(xi_record, remark_b, direction_sign=1)


@pytest.fixture(scope="session")
def stable_xi_run(xi_record, remark_b):
    pert = stable_even_perturbation(xi_record, 13)
    d = xi_record.field.domain
    u0 = Field(d, np.maximum(xi_record.field.values + 1e-3 * pert.values, 0.0))
    return evolve(u0, remark_b, None, SolverParams(dt=1 / 16, t_end=8.0, stride=2))
