import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from parasym import build_interval, build_symmetric_2d, catalog_get, find_equilibrium
from parasym.domain import Field
from parasym.reflection import symmetry_defect
from parasym.solver import (
    LinearCoefficients,
    SolverParams,
    decaying_cosine_study,
    evolve,
    holder_quotient,
    linear_step,
    negative_part_decay,
    operators,
    step,
)

D1 = build_interval(2.0, 64)
D2 = build_symmetric_2d([6, 8, 8, 4, 8], h=0.5)


def test_step_preserves_xi_to_truncation(remark_b, interval_3pi):
    d = interval_3pi
    xi = d.field(lambda x: 1 + np.cos(x))
    dt = 1 / 16
    new = step(xi, remark_b, None, 0.0, dt)
    assert np.max(np.abs(new.values - xi.values)) <= 10 * d.h**2 * dt


def test_zero_stays_zero():
    out = step(D1.zeros(), catalog_get("logistic"), None, 0.0, 0.1)
    assert np.all(out.values == 0.0)


def test_logistic_converges_to_symmetric_state():
    f = catalog_get("logistic")
    u0 = D1.field(lambda x: np.exp(-4 * (x - 0.8) ** 2))
    traj = evolve(u0, f, None, SolverParams(dt=1 / 6, t_end=60.0, stride=60))
    assert symmetry_defect(traj.final) <= 1e-6
    rec = find_equilibrium(f, D1, traj.final)
    assert np.max(np.abs(rec.field.values - traj.final.values)) <= 1e-6


@pytest.mark.parametrize("name", ["logistic", "gradient_even", "remark_b"])
def test_even_data_stay_even_2d(name):
    f = catalog_get(name)
    u0 = D2.field(lambda x1, x2: np.exp(-x1**2) * np.sin(np.pi * x2 / 2.5))
    traj = evolve(u0, f, None, SolverParams(dt=1 / (2 * f.lipschitz), t_end=5.0))
    assert max(symmetry_defect(traj.field_at(i)) for i in range(len(traj))) <= 1e-12


def test_linear_step_heat_matches_step():
    v = D1.field(lambda x: np.cos(np.pi * x / 4))
    a = linear_step(v, LinearCoefficients(np.zeros(D1.n_interior)), 0.05)
    b = step(v, catalog_get("zero"), None, 0.0, 0.05)
    assert np.allclose(a.values, b.values, atol=1e-14)


def test_linear_step_keeps_sign_with_nonpositive_c():
    rng = np.random.default_rng(1)
    v = Field(D2, rng.uniform(0, 1, D2.n_interior))
    coeffs = LinearCoefficients(-rng.uniform(0, 2, D2.n_interior))
    for _ in range(20):
        v = linear_step(v, coeffs, 0.2)
    assert v.values.min() >= 0


def test_negative_part_decays():
    v0 = D1.field(lambda x: -np.cos(np.pi * x / 4))
    _, norms, rate = negative_part_decay(D1, v0, LinearCoefficients(np.zeros(D1.n_interior)), 0.01, 2.0)
    assert norms[-1] < norms[0]
    assert rate == pytest.approx((np.pi / 4) ** 2, rel=0.02)


def test_cg_agrees_with_direct():
    f = catalog_get("logistic")
    u0 = D2.field(lambda x1, x2: np.exp(-((x1 - 1) ** 2)))
    a = step(u0, f, None, 0.0, 0.1)
    b = step(u0, f, None, 0.0, 0.1, linear_solver="cg")
    assert np.max(np.abs(a.values - b.values)) <= 1e-10


def test_blowup_guard():
    f = catalog_get("linear", c=5.0)
    traj = evolve(D1.field(lambda x: 1 - x**2 / 4), f, None,
                  SolverParams(dt=0.05, t_end=50.0, blowup_ceiling=100.0))
    assert traj.status == "blowup" and not traj.completed


def test_steady_stop():
    f = catalog_get("logistic")
    traj = evolve(D1.field(lambda x: 1 - x**2 / 4), f, None,
                  SolverParams(dt=1 / 6, t_end=500.0, stride=100, steady_tol=1e-10))
    assert traj.status == "steady" and traj.times[-1] < 500


def test_negative_initial_data_rejected():
    with pytest.raises(ValueError):
        evolve(D1.field(lambda x: -np.ones_like(x)), catalog_get("logistic"), None, SolverParams(0.1, 1.0))


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        SolverParams(dt=0.1, t_end=1.0, linear_tol=1e-6)
    assert SolverParams(dt=0.2, t_end=1.0).comparison_safe(catalog_get("logistic")) is False


def test_gradient_is_one_sided_at_boundary():
    ops = operators(D1)
    x = D1.coordinates()[:, 0]
    g = ops.gradient(x**2)[:, 0]
    assert np.allclose(g[1:-1], 2 * x[1:-1], atol=1e-12)


def test_holder_quotient_smooth_run():
    d = build_interval(np.pi / 2, 64)
    traj = evolve(d.field(np.cos), catalog_get("zero"), None, SolverParams(dt=0.01, t_end=1.0, stride=10))
    q = holder_quotient(traj, alpha=0.5)
    assert 0 < q <= 2 * np.sqrt(np.pi)


def test_holder_quotient_stationary_pair():
    d = build_interval(1.0, 16)
    traj = evolve(d.field(lambda x: 1 - x**2), catalog_get("zero"), None, SolverParams(dt=1e-12, t_end=2e-12))
    assert np.isfinite(holder_quotient(traj))


def test_refinement_orders():
    study = decaying_cosine_study()
    assert min(study.spatial_orders) >= 1.9
    assert min(study.temporal_orders) >= 0.9


@settings(max_examples=25)
@given(arrays(np.float64, D1.n_interior, elements=st.floats(0, 1.5)),
       arrays(np.float64, D1.n_interior, elements=st.floats(0, 1)),
       st.sampled_from(["logistic", "allen_cahn", "remark_b"]))
def test_comparison_property(u, gap, name):
    f = catalog_get(name)
    dt = 1 / (2 * f.lipschitz)
    a, b = Field(D1, u), Field(D1, u + gap)
    for n in range(10):
        a, b = step(a, f, None, n * dt, dt), step(b, f, None, n * dt, dt)
    assert np.min(b.values - a.values) >= -1e-12


@settings(max_examples=25)
@given(arrays(np.float64, D2.n_interior, elements=st.floats(0, 2)))
def test_nonnegativity(u):
    f = catalog_get("logistic")
    traj = evolve(Field(D2, u), f, None, SolverParams(dt=1 / 6, t_end=2.0))
    assert min(traj.min_u) >= -1e-12
