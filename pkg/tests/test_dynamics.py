import numpy as np
import pytest

from parasym import build_interval, build_symmetric_2d, catalog_get, forcing_get
from parasym.domain import Field
from parasym.dynamics import (
    OmegaEstimate,
    classify_entire_run,
    gamma_normalize,
    heteroclinic_from,
    morse_membership,
    omega_estimate,
    stable_even_perturbation,
    track_lambda,
    verify_theorem1,
    verify_theorem2_cases,
)
from parasym.equilibria import EquilibriumError, classify
from parasym.reflection import capital_lambda_bruteforce
from parasym.solver import SolverParams, evolve


@pytest.fixture(scope="module")
def logistic_run():
    d = build_interval(4.0, 128)
    u0 = d.field(lambda x: np.exp(-3 * (x - 1.5) ** 2))
    return evolve(u0, catalog_get("logistic"), None, SolverParams(dt=1 / 6, t_end=80.0, stride=6))


def test_even_decreasing_start_keeps_lambda_zero():
    d = build_symmetric_2d([5, 7, 7, 5], h=0.5)
    u0 = d.field(lambda x1, x2: np.exp(-x1**2) * np.sin(np.pi * x2 / 2))
    traj = evolve(u0, catalog_get("logistic"), None, SolverParams(dt=1 / 6, t_end=10.0))
    assert np.all(track_lambda(traj).ks == 0)


def test_shifted_bump_lambda_against_bruteforce(logistic_run):
    series = track_lambda(logistic_run)
    assert series.values[0] > 0
    assert series.upward_steps == 0
    for i in range(0, len(logistic_run), 10):
        assert series.results[i].k == capital_lambda_bruteforce(logistic_run.field_at(i)).k


def test_lambda_stays_below_top_after_unit_time(logistic_run):
    series = track_lambda(logistic_run)
    d = logistic_run.domain
    assert np.all(series.values[series.times >= 1.0] <= d.half_extent - d.h / 2)


def test_forced_runs_checked_only_in_tail():
    d = build_interval(4.0, 64)
    fo = forcing_get("exp_ramp", 1.0, 0.5, half_extent=4.0)
    traj = evolve(d.field(lambda x: np.exp(-x**2)), catalog_get("logistic"), fo,
                  SolverParams(dt=1 / 6, t_end=45.0, stride=6))
    series = track_lambda(traj, forcing_tol=1e-8)
    assert series.checked_from == pytest.approx(traj.times[np.argmax(np.array(
        [fo.envelope(t) <= 1e-8 for t in traj.times]))])


def test_omega_logistic_singleton(logistic_run):
    om = omega_estimate(logistic_run)
    assert om.singleton and om.converged
    rep = om.representatives[0]
    assert rep.symmetry_defect <= 1e-6 and rep.monotone_defect <= 1e-6
    assert rep.matched is not None and rep.matched.cls == "E0"


def test_omega_rejects_bad_tail(logistic_run):
    with pytest.raises(ValueError):
        omega_estimate(logistic_run, tail_fraction=0.75)


def test_net_radius_separation(logistic_run):
    om = omega_estimate(logistic_run, tail_fraction=0.5, net_radius=1e-12)
    fields = [r.field.values for r in om.representatives]
    for i in range(len(fields)):
        for j in range(i):
            assert np.max(np.abs(fields[i] - fields[j])) > 1e-12


def test_stable_perturbation_returns_to_xi(stable_xi_run, xi_record):
    om = omega_estimate(stable_xi_run)
    assert om.singleton
    assert om.representatives[0].matched.cls == "Eplus"
    assert morse_membership(om, [xi_record]).morse_set == "M1"


def test_stable_perturbation_requires_odd_mode(xi_record):
    with pytest.raises(ValueError):
        stable_even_perturbation(xi_record, 2)


def test_heteroclinic_plus(heteroclinic_plus, xi_record):
    assert heteroclinic_plus.meta["alpha_record"] is xi_record
    assert heteroclinic_plus.meta["eigenvalue"] == pytest.approx(35 / 36, abs=1e-3)
    v = classify_entire_run(heteroclinic_plus)
    assert v.passed and v.case == "iii"
    assert v.details["lambda_drop"] == pytest.approx(2 * np.pi, abs=xi_record.field.domain.h)


def test_heteroclinic_minus_recorded(xi_record, remark_b):
    traj = heteroclinic_from(xi_record, remark_b, direction_sign=-1,
                             params=SolverParams(dt=1 / 16, t_end=30.0, stride=8))
    series = track_lambda(traj)
    v = classify_entire_run(traj)
    # recorded only: the run leaves the nonnegative cone
    assert v.verdict == "inconclusive"
    assert "nonnegative" in v.details["reason"]
    assert len(series.values) == len(traj)


def test_heteroclinic_zero_amplitude_stays(xi_record, remark_b):
    traj = heteroclinic_from(xi_record, remark_b, amplitude=0.0,
                             params=SolverParams(dt=1e-3, t_end=2.0, stride=100))
    assert np.max(np.abs(traj.final.values - np.maximum(xi_record.field.values, 0))) <= 1e-6


def test_heteroclinic_needs_unstable_record(logistic):
    d = build_interval(4.0, 64)
    from parasym import find_equilibrium

    rec = find_equilibrium(logistic, d, d.field(lambda x: np.cos(np.pi * x / 8)))
    with pytest.raises(EquilibriumError):
        heteroclinic_from(rec, logistic)


def test_theorem1_inconclusive_on_blowup():
    d = build_interval(2.0, 32)
    traj = evolve(d.field(lambda x: 1 - x**2 / 4), catalog_get("linear", c=5.0), None,
                  SolverParams(dt=0.05, t_end=50.0, blowup_ceiling=50.0))
    assert verify_theorem1(traj).verdict == "inconclusive"


def test_theorem1_inconclusive_when_forcing_still_large():
    d = build_interval(4.0, 64)
    fo = forcing_get("exp_ramp", 1.0, 0.01, half_extent=4.0)
    traj = evolve(d.field(lambda x: np.exp(-x**2)), catalog_get("logistic"), fo,
                  SolverParams(dt=1 / 6, t_end=20.0, stride=6))
    v = verify_theorem1(traj)
    assert v.verdict == "inconclusive" and "forcing" in v.details["reason"]


def test_theorem2_cases(heteroclinic_plus, xi_record, remark_b):
    stationary = evolve(Field(xi_record.field.domain, np.maximum(xi_record.field.values, 0)),
                        remark_b, None, SolverParams(dt=1 / 16, t_end=5.0, stride=4))
    stationary.meta["alpha_record"] = xi_record
    baseline = evolve(heteroclinic_plus.final.with_values(1.05 * heteroclinic_plus.final.values),
                      remark_b, None, SolverParams(dt=1 / 16, t_end=40.0, stride=4, steady_tol=1e-11))
    report = verify_theorem2_cases([baseline, stationary, heteroclinic_plus])
    assert report.passed
    assert report.case == "i,ii,iii"


def test_gamma_on_decaying_cosine():
    d = build_interval(np.pi / 2, 64)
    traj = evolve(d.field(np.cos), catalog_get("zero"), None, SolverParams(dt=0.01, t_end=8.0, stride=10))
    z, rep = gamma_normalize(traj)
    assert rep.all_equal and set(rep.lambda_z) == {0}
    shapes = np.array(z.snapshots)
    assert np.max(np.abs(shapes - shapes[0])) <= 0.05


def test_gamma_noop_when_not_decaying(logistic_run):
    z, rep = gamma_normalize(logistic_run)
    assert z is None and not rep.applied


def test_gamma_truncates_tiny_norms():
    d = build_interval(1.0, 16)
    traj = evolve(d.field(lambda x: np.cos(np.pi * x / 2)), catalog_get("linear", c=-100.0), None,
                  SolverParams(dt=0.005, t_end=8.0))
    _, rep = gamma_normalize(traj)
    assert rep.truncated_at is not None


def test_morse_logistic_and_planted(logistic_run, remark_b_sweep, remark_b):
    om = omega_estimate(logistic_run)
    assert morse_membership(om, []).inside_single_set
    xi = remark_b_sweep.eplus[0]
    e0 = remark_b_sweep.e0[0]
    mixed = OmegaEstimate.from_profiles([xi.field, e0.field], remark_b)
    report = morse_membership(mixed, remark_b_sweep.records)
    assert report.straddles and report.assignment == ["M1", "M2"]
    assert report.set_lambdas == sorted(report.set_lambdas, reverse=True)
