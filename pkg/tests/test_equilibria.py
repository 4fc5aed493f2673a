import numpy as np
import pytest

from parasym import build_interval, build_symmetric_2d, catalog_get, find_equilibrium
from parasym.domain import Field
from parasym.equilibria import (
    ClassificationConflict,
    EquilibriumError,
    LinearCoefficients,
    LinearizedOperator,
    check_equilibrium_symmetry,
    classify,
    equilibrium_sweep,
    leading_eigenpair,
    linearize_at,
    residual_norm,
)
from parasym.reflection import capital_lambda
from parasym.solver import SolverParams, evolve


def test_xi_recovered(xi_record, interval_3pi):
    d = interval_3pi
    assert xi_record.cls == "Eplus"
    assert xi_record.residual <= 1e-10
    err = np.max(np.abs(xi_record.field.values - (1 + np.cos(d.coordinates()[:, 0]))))
    assert err <= d.h**2


def test_xi_nodal_components(xi_record, interval_3pi):
    x = interval_3pi.coordinates()[:, 0]
    comps = xi_record.nodal_components
    assert len(comps) == 3
    centres = sorted(float(np.mean(x[c])) for c in comps)
    assert centres == pytest.approx([-2 * np.pi, 0.0, 2 * np.pi], abs=interval_3pi.h)


def test_xi_lambda_is_vanishing_plane(xi_record, interval_3pi):
    # V_lambda xi vanishes on the component of the cap beyond pi at lambda = 2*pi
    assert abs(xi_record.lam.value - 2 * np.pi) <= interval_3pi.h / 2


def test_logistic_zero_guess(logistic):
    d = build_interval(4.0, 64)
    rec = find_equilibrium(logistic, d, d.zeros())
    assert rec.cls == "zero"


def test_logistic_positive_equilibrium_matches_long_run(logistic):
    d = build_interval(4.0, 128)
    guess = d.field(lambda x: np.cos(np.pi * x / 8))
    rec = find_equilibrium(logistic, d, guess)
    assert rec.cls == "E0"
    traj = evolve(guess, logistic, None, SolverParams(dt=1 / 6, t_end=400.0, stride=10**6, steady_tol=1e-12))
    assert np.max(np.abs(traj.final.values - rec.field.values)) <= 1e-8


def test_classify_examples():
    d = build_interval(2.0, 64)
    assert classify(d.zeros(), 0.0).cls == "zero"
    assert classify(d.field(lambda x: 4 - x**2), 0.0).cls == "E0"
    with pytest.raises(ValueError):
        classify(d.field(lambda x: 4 - x**2), 1.0)


def test_classify_conflict_strict():
    d = build_interval(2.0, 64)
    # positive everywhere yet asymmetric: functional and nodal test disagree
    z = d.field(lambda x: 2 + np.sin(x))
    assert classify(z, 0.0).conflict
    with pytest.raises(ClassificationConflict):
        classify(z, 0.0, strict=True)


def test_sweep_remark_b(remark_b_sweep, xi_record):
    classes = [r.cls for r in remark_b_sweep.records]
    assert classes.count("Eplus") == 1
    assert "E0" in classes
    xi = remark_b_sweep.eplus[0]
    assert np.max(np.abs(xi.field.values - xi_record.field.values)) <= 1e-6
    e0 = remark_b_sweep.e0[0]
    assert e0.field.values.min() > 0
    assert remark_b_sweep.eplus_e0_distances().shape == (1, len(remark_b_sweep.e0))
    # the remark_b nonlinearity has f(0) = -1, so 0 is not a steady state
    assert all(r.cls != "zero" for r in remark_b_sweep.records)


def test_sweep_eplus_count_stable_under_doubling(remark_b, interval_3pi, remark_b_sweep):
    doubled = equilibrium_sweep(remark_b, interval_3pi, 100, seed=0)
    assert doubled.n_eplus == remark_b_sweep.n_eplus


def test_sweep_logistic_has_no_eplus(logistic):
    d = build_interval(4.0, 128)
    res = equilibrium_sweep(logistic, d, 30, seed=1, jobs=4)
    assert res.n_eplus == 0
    assert {r.cls for r in res.records} == {"zero", "E0"}
    assert len(res.e0) == 1


def test_single_trivial_guess(logistic):
    res = equilibrium_sweep(logistic, build_interval(2.0, 32), 1)
    assert [r.cls for r in res.records] == ["zero"]


def test_symmetry_and_classes_agree(remark_b_sweep):
    for rec in remark_b_sweep.records:
        assert not rec.conflict
        check = check_equilibrium_symmetry(rec)
        assert check.passed
        assert rec.symmetry_defect <= 1e-6 * rec.sup_norm
    e0 = remark_b_sweep.e0[0]
    assert check_equilibrium_symmetry(e0).component_defects == []


def test_symmetry_check_rejects_unconverged(xi_record):
    from dataclasses import replace

    bad = replace(xi_record, residual=1e-3)
    with pytest.raises(ValueError):
        check_equilibrium_symmetry(bad)


def test_find_equilibrium_failure_raises():
    f = catalog_get("linear", c=5.0)
    d = build_interval(2.0, 32)
    with pytest.raises(EquilibriumError):
        find_equilibrium(f, d, d.field(lambda x: 1 + 0 * x), max_iter=0, continuation_time=20.0)


def test_linearization_coefficients(xi_record, remark_b, logistic):
    L = linearize_at(xi_record.field, remark_b)
    assert np.allclose(L.coeffs.c, 1.0)
    assert L.coeffs.b is None or np.allclose(L.coeffs.b, 0.0)
    d = build_interval(2.0, 32)
    assert np.allclose(linearize_at(d.zeros(), logistic).coeffs.c, 1.0)


def test_gradient_even_advection_is_even():
    f = catalog_get("gradient_even", eps=0.1)
    d = build_interval(2.0, 64)
    z = d.field(lambda x: np.cos(np.pi * x / 4))
    b = linearize_at(z, f).coeffs.b[:, 0]
    grad = np.gradient(z.values, d.h)
    assert np.allclose(b[1:-1], 0.2 * grad[1:-1], atol=1e-3)
    # b is odd in x1 as the derivative of an even field
    assert np.allclose(b, -b[::-1], atol=1e-12)


def test_eigenpairs_on_interval(interval_3pi):
    d = interval_3pi
    zero = LinearizedOperator(d, LinearCoefficients(np.zeros(d.n_interior)))
    sigma, phi = leading_eigenpair(zero)
    assert sigma == pytest.approx(-1 / 36, abs=1e-6)
    assert np.max(np.abs(phi.values - phi.values[::-1])) <= 1e-8


def test_eigenfield_even_in_2d():
    d = build_symmetric_2d([4, 6, 6, 4], h=0.5)
    L = LinearizedOperator(d, LinearCoefficients(np.ones(d.n_interior)))
    _, phi = leading_eigenpair(L)
    g = phi.grid()
    assert np.max(np.abs(g - g[::-1])) <= 1e-8
    assert phi.values.min() >= -1e-12


def test_residual_of_exact_xi_is_truncation(remark_b, interval_3pi):
    r = residual_norm(interval_3pi.field(lambda x: 1 + np.cos(x)), remark_b)
    assert r == pytest.approx(interval_3pi.h**2 / 12, rel=0.05)


def test_lambda_scale_invariance_on_record(xi_record):
    assert capital_lambda(xi_record.field * 1e-5).k == xi_record.lam.k
