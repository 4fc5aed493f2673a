"""Long-time behaviour: the functional along trajectories, limit sets, and verdicts.

Limit sets are estimated from the tail of a forward run.  Backward limits
of entire solutions are represented by construction only: runs started
next to an unstable equilibrium record that equilibrium as their
backward limit (``traj.meta["alpha_record"]``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .domain import Field
from .equilibria import (
    DEDUP_TOL,
    EquilibriumError,
    EquilibriumRecord,
    classify,
    find_equilibrium,
    leading_eigenpair,
    linearize_at,
    newton,
    residual_norm,
)
from .nonlinearity import Nonlinearity
from .reflection import (
    LambdaResult,
    axis_slope_stats,
    capital_lambda,
    monotone_defect,
    symmetry_defect,
)
from .solver import SolverError, SolverParams, Trajectory, evolve

logger = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


# --------------------------------------------------------------------------
# the functional along a trajectory


@dataclass
class LambdaSeries:
    times: np.ndarray
    results: list[LambdaResult]
    h: float
    tol_rel: float
    checked_from: float = 0.0

    @property
    def quantization(self) -> float:
        return self.h / 2

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.k for r in self.results], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return self.ks * (self.h / 2)

    def _checked(self) -> np.ndarray:
        return self.ks[self.times >= self.checked_from]

    @property
    def upward_steps(self) -> int:
        """Number of increases of any size in the checked window."""
        return int(np.count_nonzero(np.diff(self._checked()) > 0))

    @property
    def upward_violations(self) -> int:
        """Increases by more than one half-grid step in the checked window."""
        return int(np.count_nonzero(np.diff(self._checked()) > 1))

    @property
    def max_upward_jump(self) -> float:
        d = np.diff(self._checked())
        return float(max(0, d.max())) * self.h / 2 if d.size else 0.0

    @property
    def monotone(self) -> bool:
        return self.upward_violations == 0

    def csv_rows(self) -> list[dict]:
        return [r.csv_row(float(t)) for t, r in zip(self.times, self.results)]


def track_lambda(
    traj: Trajectory,
    tol_rel: float = 1e-9,
    *,
    forcing_tol: float = 1e-8,
) -> LambdaSeries:
    """Functional at every snapshot.

    Monotonicity is assessed on the whole run for autonomous problems and,
    for forced runs, from the first snapshot at which the forcing envelope is
    below ``forcing_tol``.
    """
    times = np.asarray(traj.times, dtype=float)
    results = [capital_lambda(traj.field_at(i), tol_rel) for i in range(len(traj))]
    checked_from = 0.0
    if not traj.forcing.is_zero:
        small = [t for t in times if traj.forcing.envelope(t) <= forcing_tol]
        checked_from = small[0] if small else np.inf
    return LambdaSeries(times, results, traj.domain.h, tol_rel, checked_from)


# --------------------------------------------------------------------------
# omega-limit estimates


@dataclass
class Representative:
    field: Field
    time: float
    lam: LambdaResult
    symmetry_defect: float
    monotone_defect: float
    slope: dict
    matched: EquilibriumRecord | None = None
    match_distance: float | None = None


@dataclass
class OmegaEstimate:
    representatives: list[Representative]
    tail_diameter: float
    net_radius: float
    converged: bool
    tail_times: tuple[float, float]

    @property
    def singleton(self) -> bool:
        return len(self.representatives) == 1

    @classmethod
    def from_profiles(
        cls,
        profiles: Sequence[Field],
        f: Nonlinearity | None = None,
        *,
        tol_rel: float = 1e-9,
        net_radius: float = 0.0,
    ) -> "OmegaEstimate":
        """Estimate built directly from given profiles (no net thinning)."""
        reps = [_representative(p, 0.0, f, tol_rel, None) for p in profiles]
        diam = _diameter([p.values for p in profiles])
        return cls(reps, diam, net_radius, diam <= net_radius, (0.0, 0.0))


def _diameter(arrays: Sequence[np.ndarray]) -> float:
    if len(arrays) < 2:
        return 0.0
    data = np.asarray(arrays)
    best = 0.0
    for i in range(len(data) - 1):
        best = max(best, float(np.max(np.abs(data[i + 1 :] - data[i]))))
    return best


def _polish(z: Field, f: Nonlinearity, match_tol: float | None):
    try:
        polished, rn, _, ok = newton(f, z)
    except Exception:  # noqa: BLE001
        return None, None
    if not ok:
        return None, None
    dist = float(np.max(np.abs(polished.values - z.values)))
    if match_tol is not None and dist > match_tol:
        return None, dist
    try:
        return classify(polished, rn), dist
    except ValueError:
        return None, dist


def _representative(z, t, f, tol_rel, match_tol) -> Representative:
    rep = Representative(
        field=z,
        time=t,
        lam=capital_lambda(z, tol_rel),
        symmetry_defect=symmetry_defect(z),
        monotone_defect=monotone_defect(z, 0.0),
        slope=axis_slope_stats(z),
    )
    if f is not None:
        rep.matched, rep.match_distance = _polish(z, f, match_tol)
    return rep


def omega_estimate(
    traj: Trajectory,
    tail_fraction: float = 0.25,
    net_radius: float | None = None,
    *,
    tol_rel: float = 1e-9,
    eps_conv: float | None = None,
    match_tol: float | None = None,
    polish: bool = True,
) -> OmegaEstimate:
    """Epsilon-net of the tail snapshots, with diagnostics per representative.

    ``net_radius`` defaults to ``1e-4 * sup`` over the tail; the tail counts
    as converged when its diameter is below ``eps_conv`` (default: the net
    radius).  Representatives are matched to equilibria by Newton polish,
    accepted when the polished state is within ``match_tol`` (default
    ``1e-3 * sup``).
    """
    if not traj.completed:
        raise ValueError(f"trajectory status is {traj.status!r}; need a completed run")
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 1/2]")
    times = np.asarray(traj.times)
    t_last = times[-1]
    start = t_last - tail_fraction * (t_last - times[0])
    idx = np.flatnonzero(times >= start)
    tail = [traj.snapshots[i] for i in idx]
    sup = max(float(np.max(np.abs(v))) for v in tail) if tail[0].size else 0.0
    if net_radius is None:
        net_radius = 1e-4 * sup
    if eps_conv is None:
        eps_conv = net_radius
    if match_tol is None:
        match_tol = 1e-3 * max(sup, 1e-300)

    centres: list[int] = []
    for i, v in zip(idx, tail):
        if all(np.max(np.abs(v - traj.snapshots[c])) > net_radius for c in centres):
            centres.append(int(i))
    diameter = _diameter(tail)
    f = traj.nonlinearity if polish else None
    reps = [
        _representative(traj.field_at(c), float(times[c]), f, tol_rel, match_tol)
        for c in centres
    ]
    return OmegaEstimate(reps, diameter, net_radius, diameter <= eps_conv, (float(start), float(t_last)))


# --------------------------------------------------------------------------
# constructed entire solutions


def heteroclinic_from(
    record: EquilibriumRecord,
    f: Nonlinearity,
    amplitude: float | None = None,
    direction_sign: int = 1,
    params: SolverParams | None = None,
) -> Trajectory:
    """Forward run from ``z ± amplitude * (principal eigenfield)``.

    Approximates an entire solution leaving the unstable equilibrium ``z``
    along its principal direction; ``z`` is stored as the backward limit.
    """
    if direction_sign not in (1, -1):
        raise ValueError("direction_sign must be +1 or -1")
    z = record.field
    sigma, phi = leading_eigenpair(linearize_at(z, f))
    if sigma <= 0:
        raise EquilibriumError(f"equilibrium is not unstable (leading eigenvalue {sigma:.4g})")
    if amplitude is None:
        amplitude = 1e-3 * z.sup_norm()
    u0 = Field(z.domain, np.maximum(z.values + direction_sign * amplitude * phi.values, 0.0))
    if params is None:
        params = SolverParams(
            dt=1.0 / (2.0 * max(f.lipschitz, 1.0)), t_end=300.0, stride=4, steady_tol=1e-11
        )
    traj = evolve(u0, f, None, params)
    if traj.status == "blowup":
        raise SolverError(f"heteroclinic run hit the blow-up guard at t={traj.times[-1]:g}")
    traj.meta.update(
        alpha_record=record,
        eigenvalue=sigma,
        eigenfield=phi,
        amplitude=amplitude,
        direction_sign=direction_sign,
    )
    return traj


# --------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    verdict: str
    branch: str = ""
    case: str = ""
    details: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "branch": self.branch,
            "case": self.case,
            "details": _plain(self.details),
            "witnesses": _plain(self.witnesses),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def verify_theorem1(
    traj: Trajectory,
    *,
    tol_sym: float = 1e-6,
    tol_mon: float = 1e-6,
    forcing_tol: float = 1e-8,
    tail_fraction: float = 0.25,
    tol_rel: float = 1e-9,
    zero_tol: float = 1e-8,
) -> Verdict:
    """Symmetry of the limit set and the singleton-Eplus / decreasing dichotomy."""
    if traj.status == "blowup":
        return Verdict(INCONCLUSIVE, details={"reason": "run aborted by blow-up guard"})
    if not traj.completed:
        return Verdict(INCONCLUSIVE, details={"reason": f"run status {traj.status}"})
    times = np.asarray(traj.times)
    tail_start = times[-1] - tail_fraction * (times[-1] - times[0])
    envelope = traj.forcing.envelope(tail_start)
    if envelope > forcing_tol:
        return Verdict(
            INCONCLUSIVE,
            details={"reason": "forcing not small before the tail", "envelope": envelope},
        )
    omega = omega_estimate(traj, tail_fraction, tol_rel=tol_rel)
    details = {
        "n_representatives": len(omega.representatives),
        "tail_diameter": omega.tail_diameter,
        "tail_times": omega.tail_times,
        "symmetry_defects": [r.symmetry_defect for r in omega.representatives],
        "monotone_defects": [r.monotone_defect for r in omega.representatives],
        "lambdas": [r.lam.value for r in omega.representatives],
        "matched_classes": [r.matched.cls if r.matched else None for r in omega.representatives],
        "slope_stats": [r.slope for r in omega.representatives],
        "min_u_tail": float(min(np.min(traj.snapshots[i]) for i in np.flatnonzero(times >= tail_start))),
    }
    if not omega.converged:
        details["reason"] = "tail has not converged"
        return Verdict(INCONCLUSIVE, details=details)
    asym = [i for i, r in enumerate(omega.representatives) if r.symmetry_defect > tol_sym]
    if asym:
        return Verdict(FAIL, branch="symmetry", details=details,
                       witnesses=[{"representative": i, "time": omega.representatives[i].time,
                                   "symmetry_defect": omega.representatives[i].symmetry_defect}
                                  for i in asym])
    reps = omega.representatives
    if omega.singleton and reps[0].matched is not None and reps[0].matched.cls == "Eplus":
        return Verdict(PASS, branch="omega_singleton_eplus", details=details)
    nonzero = [r for r in reps if r.field.sup_norm() > zero_tol]
    bad = [i for i, r in enumerate(reps) if r in nonzero and r.monotone_defect > tol_mon]
    if not bad:
        return Verdict(PASS, branch="decreasing_on_positive_half", details=details)
    return Verdict(FAIL, branch="dichotomy", details=details,
                   witnesses=[{"representative": i, "monotone_defect": reps[i].monotone_defect}
                              for i in bad])


def _initial_record(traj: Trajectory) -> EquilibriumRecord | None:
    z = traj.field_at(0)
    rn = residual_norm(z, traj.nonlinearity)
    try:
        return classify(z, rn)
    except ValueError:
        return None


def classify_entire_run(
    traj: Trajectory,
    *,
    tol_rel: float = 1e-9,
    stationary_tol: float = 1e-6,
    tail_fraction: float = 0.25,
) -> Verdict:
    """Assign one of the four cases for entire solutions to a constructed run."""
    series = track_lambda(traj, tol_rel)
    lam_series = series.values
    u0 = traj.snapshots[0]
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    drift = max(float(np.max(np.abs(s - u0))) for s in traj.snapshots)
    stationary = drift <= stationary_tol * scale
    alpha = traj.meta.get("alpha_record")
    if alpha is None and stationary:
        alpha = _initial_record(traj)
    details = {
        "lambda_start": float(lam_series[0]),
        "lambda_end": float(lam_series[-1]),
        "lambda_upward_violations": series.upward_violations,
        "stationary": stationary,
        "drift": drift,
        "alpha_class": None if alpha is None else alpha.cls,
        "alpha_lambda": None if alpha is None else alpha.lam.value,
    }
    if not traj.completed:
        details["reason"] = f"run status {traj.status}"
        return Verdict(INCONCLUSIVE, details=details)
    lowest = min(traj.min_u) if traj.min_u else 0.0
    details["min_u"] = lowest
    if lowest < -stationary_tol * scale:
        details["reason"] = "solution leaves the nonnegative cone"
        return Verdict(INCONCLUSIVE, details=details)
    omega = omega_estimate(traj, tail_fraction, tol_rel=tol_rel)
    reps = omega.representatives
    details.update(
        omega_converged=omega.converged,
        omega_lambdas=[r.lam.value for r in reps],
        omega_classes=[r.matched.cls if r.matched else None for r in reps],
    )
    alpha_plus = alpha is not None and alpha.cls == "Eplus"
    cases = {
        "i": bool(np.all(series.ks == 0)),
        "ii": stationary and alpha_plus,
        "iii": (not stationary) and alpha_plus and omega.converged
        and all(r.lam.k == 0 for r in reps),
        "iv": (not stationary) and alpha_plus and omega.singleton and omega.converged
        and reps[0].matched is not None and reps[0].matched.cls == "Eplus"
        and reps[0].matched.lam.k < alpha.lam.k,
    }
    details["case_flags"] = cases
    hits = [c for c, ok in cases.items() if ok]
    if len(hits) != 1:
        details["reason"] = "no case matched" if not hits else f"several cases matched: {hits}"
        return Verdict(INCONCLUSIVE, details=details)
    case = hits[0]
    if case in ("iii", "iv"):
        lam_omega = max(r.lam.value for r in reps)
        details["lambda_drop"] = alpha.lam.value - lam_omega
        if not lam_omega < alpha.lam.value:
            return Verdict(FAIL, case=case, details=details,
                           witnesses=[{"lambda_alpha": alpha.lam.value, "lambda_omega": lam_omega}])
    return Verdict(PASS, case=case, details=details)


def verify_theorem2_cases(runs: Sequence[Trajectory], **kwargs) -> Verdict:
    """Case assignment for every run; passes only when each run passes."""
    per_run = [classify_entire_run(t, **kwargs) for t in runs]
    verdicts = [v.verdict for v in per_run]
    if FAIL in verdicts:
        overall = FAIL
    elif INCONCLUSIVE in verdicts:
        overall = INCONCLUSIVE
    else:
        overall = PASS
    return Verdict(
        overall,
        details={"runs": [v.to_dict() for v in per_run]},
        case=",".join(v.case or "?" for v in per_run),
    )


# --------------------------------------------------------------------------
# renormalization of decaying runs


@dataclass
class GammaReport:
    applied: bool
    reason: str = ""
    gamma_times: np.ndarray | None = None
    gamma_values: np.ndarray | None = None
    lambda_u: list[int] = field(default_factory=list)
    lambda_z: list[int] = field(default_factory=list)
    truncated_at: float | None = None

    @property
    def all_equal(self) -> bool:
        return self.applied and self.lambda_u == self.lambda_z


NORM_FLOOR = 1e-300


def gamma_normalize(traj: Trajectory, tol_rel: float = 1e-9) -> tuple[Trajectory | None, GammaReport]:
    """Divide a decaying run by a smooth interpolant of its unit-time sup norms.

    The scale ``gamma(t)`` is the exponential of the monotone cubic
    interpolant of ``log ||u(., k)||_inf`` at integer times ``k``.  The
    functional is compared snapshot by snapshot for ``U`` and ``U/gamma``.
    """
    times = np.asarray(traj.times)
    norms = np.array([float(np.max(np.abs(s))) if s.size else 0.0 for s in traj.snapshots])
    keep = len(times)
    truncated = None
    below = np.flatnonzero(norms < NORM_FLOOR)
    if below.size:
        keep = int(below[0])
        truncated = float(times[keep]) if keep < len(times) else None
    times, norms = times[:keep], norms[:keep]
    grid_t = np.arange(np.ceil(times[0]), np.floor(times[-1]) + 1) if keep else np.array([])
    if grid_t.size < 2:
        return None, GammaReport(False, "need snapshots spanning at least one time unit")
    nearest = np.array([int(np.argmin(np.abs(times - k))) for k in grid_t])
    sampled = norms[nearest]
    if np.any(sampled <= 0):
        return None, GammaReport(False, "tail norms are not positive and decaying")
    # decay towards zero keeps a positive log decrement per unit time; a run
    # settling on a nonzero state has decrements shrinking to nothing
    dec = -np.diff(np.log(sampled))
    tail = dec[len(dec) // 2 :]
    if np.any(tail <= 1e-6) or tail[-1] < 0.5 * tail[0]:
        return None, GammaReport(False, "tail norms are not positive and decaying")
    eta = PchipInterpolator(times[nearest], np.log(sampled), extrapolate=True)
    gamma = np.exp(eta(times))
    out = Trajectory(traj.domain, traj.nonlinearity, traj.forcing, traj.params,
                     status=traj.status, meta={**traj.meta, "normalized": True})
    report = GammaReport(True, gamma_times=times, gamma_values=gamma, truncated_at=truncated)
    for i, (t, g) in enumerate(zip(times, gamma)):
        u = traj.field_at(i)
        zf = Field(traj.domain, u.values / g)
        out.times.append(float(t))
        out.snapshots.append(zf.values)
        report.lambda_u.append(capital_lambda(u, tol_rel).k)
        report.lambda_z.append(capital_lambda(zf, tol_rel).k)
    return out, report


# --------------------------------------------------------------------------
# Morse sets


@dataclass
class MorseReport:
    set_labels: list[str]
    set_lambdas: list[float]
    assignment: list[str | None]

    @property
    def inside_single_set(self) -> bool:
        return None not in self.assignment and len(set(self.assignment)) == 1

    @property
    def straddles(self) -> bool:
        return not self.inside_single_set

    @property
    def morse_set(self) -> str | None:
        return self.assignment[0] if self.inside_single_set else None

    def to_dict(self) -> dict:
        return {
            "sets": [{"label": lbl, "lambda": lam} for lbl, lam in zip(self.set_labels, self.set_lambdas)],
            "assignment": self.assignment,
            "inside_single_set": self.inside_single_set,
        }


def morse_membership(
    omega: OmegaEstimate,
    equilibria: Sequence[EquilibriumRecord],
    *,
    dedup_tol: float = DEDUP_TOL,
) -> MorseReport:
    """Place each representative in a Morse set.

    Sets are ``M1..Mk`` (the Eplus equilibria ordered by decreasing
    functional) followed by ``M{k+1}``, the profiles with functional 0.
    """
    eplus = sorted((r for r in equilibria if r.cls == "Eplus"), key=lambda r: -r.lam.value)
    if omega.representatives:
        dom = omega.representatives[0].field.domain
        eplus = [r for r in eplus if r.field.domain.same_as(dom)]
    labels = [f"M{j + 1}" for j in range(len(eplus))] + [f"M{len(eplus) + 1}"]
    lams = [r.lam.value for r in eplus] + [0.0]
    assignment: list[str | None] = []
    for rep in omega.representatives:
        probe = rep.matched.field if rep.matched is not None else rep.field
        label = None
        for j, rec in enumerate(eplus):
            if np.max(np.abs(probe.values - rec.field.values)) <= dedup_tol:
                label = labels[j]
                break
        if label is None and rep.lam.k == 0:
            label = labels[-1]
        assignment.append(label)
    return MorseReport(labels, lams, assignment)


def stable_even_perturbation(record: EquilibriumRecord, mode: int = 13) -> Field:
    """``cos(mode*pi*x1 / (2*ell))`` on a 1D domain (odd ``mode``), an even Dirichlet mode.

    Modes above the unstable range of the linearization decay under the flow.
    """
    domain = record.field.domain
    if domain.dim != 1 or mode % 2 == 0:
        raise ValueError("needs a 1D domain and an odd mode number")
    ell = domain.half_extent
    return domain.field(lambda x: np.cos(mode * np.pi * x / (2 * ell)))


def solve_from(f: Nonlinearity, guess: Field, **kwargs) -> EquilibriumRecord:
    return find_equilibrium(f, guess.domain, guess, **kwargs)
