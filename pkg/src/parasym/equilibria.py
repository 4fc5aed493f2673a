"""Steady states of the autonomous problem and their classification.

Equilibria solve ``Δ_h z + f(x, z, ∇_h z) = 0``.  A converged state is
``zero``, ``E0`` (moving-plane functional equal to 0: symmetric and
nonincreasing in x1 > 0) or ``Eplus`` (functional positive, which on a
nonnegative equilibrium means it vanishes somewhere inside the domain).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .domain import Domain, Field
from .nonlinearity import Nonlinearity
from .reflection import LambdaResult, capital_lambda, symmetry_defect
from .solver import (
    LinearCoefficients,
    SolverParams,
    evolve,
    linear_operator_matrix,
    linear_step,
    operators,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
ZERO_TOL = 1e-8
NODAL_REL_TOL = 1e-6
DEDUP_TOL = 1e-6


class EquilibriumError(RuntimeError):
    pass


class ClassificationConflict(RuntimeError):
    pass


def residual(z: Field, f: Nonlinearity) -> np.ndarray:
    ops = operators(z.domain)
    grad = ops.gradient(z.values) if f.uses_gradient else np.zeros_like(ops.coords)
    return ops.laplacian @ z.values + f(ops.coords, z.values, grad)


def residual_norm(z: Field, f: Nonlinearity) -> float:
    r = residual(z, f)
    return float(np.max(np.abs(r))) if r.size else 0.0


def jacobian(z: Field, f: Nonlinearity) -> sp.csr_matrix:
    return linear_operator_matrix(z.domain, linearization_coefficients(z, f))


def linearization_coefficients(z: Field, f: Nonlinearity) -> LinearCoefficients:
    ops = operators(z.domain)
    grad = ops.gradient(z.values) if f.uses_gradient else np.zeros_like(ops.coords)
    c = f.partial_u(ops.coords, z.values, grad)
    b = f.partial_p(ops.coords, z.values, grad) if f.uses_gradient else None
    return LinearCoefficients(c=np.asarray(c, dtype=float), b=b)


# --------------------------------------------------------------------------
# records and classification


@dataclass
class EquilibriumRecord:
    field: Field
    residual: float
    cls: str
    lam: LambdaResult
    nodal_components: list[np.ndarray]
    symmetry_defect: float
    conflict: bool = False
    method: str = "newton"
    iterations: int = 0
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def sup_norm(self) -> float:
        return self.field.sup_norm()

    @property
    def lambda_value(self) -> float:
        return self.lam.value

    def index_row(self) -> dict:
        return {
            "name": self.name,
            "class": self.cls,
            "lambda": self.lam.value,
            "residual": self.residual,
            "n_nodal_components": len(self.nodal_components),
            "sup_norm": self.sup_norm,
        }


EQUILIBRIUM_CSV_COLUMNS = ("name", "class", "lambda", "residual", "n_nodal_components", "sup_norm")


def interior_minimum(z: Field) -> float:
    """Smallest value of ``z`` including parabolic estimates between nodes.

    At each discrete local minimum along a grid line the parabola through the
    node and its two neighbours is minimized, so that a zero of even order
    lying between nodes is still detected.
    """
    zg = z.grid()
    domain = z.domain
    best = float(z.values.min())
    for axis in range(domain.dim):
        a = np.moveaxis(zg, axis, 0)
        m = np.moveaxis(domain.mask, axis, 0)
        left, mid, right = a[:-2], a[1:-1], a[2:]
        ok = m[:-2] & m[1:-1] & m[2:] & (mid <= left) & (mid <= right)
        curv = left - 2 * mid + right
        ok &= curv > 0
        if ok.any():
            vertex = mid[ok] - (right[ok] - left[ok]) ** 2 / (8 * curv[ok])
            best = min(best, float(vertex.min()))
    return best


def nodal_components(z: Field, tol_nodal: float) -> list[np.ndarray]:
    """Connected components of ``{z > tol_nodal}`` as interior-index arrays."""
    domain = z.domain
    positive = z.grid() > tol_nodal
    positive &= domain.mask
    structure = ndimage.generate_binary_structure(domain.dim, 1)
    labels, n = ndimage.label(positive, structure=structure)
    return [np.sort(domain.index_grid[labels == c]) for c in range(1, n + 1)]


def classify(
    z: Field,
    residual: float,
    *,
    threshold: float | None = None,
    tol_rel: float = 1e-9,
    strict: bool = False,
    name: str = "",
) -> EquilibriumRecord:
    """Classify a converged equilibrium as ``zero``, ``E0`` or ``Eplus``.

    The class follows the moving-plane functional; it is cross-checked
    against the nodal criterion (``Eplus`` iff nonzero and vanishing
    somewhere inside).  A disagreement sets ``conflict`` and, with
    ``strict=True``, raises :class:`ClassificationConflict`.
    """
    if threshold is None:
        threshold = RESIDUAL_TOL * max(1.0, z.sup_norm())
    if residual > threshold:
        raise ValueError(f"residual {residual:.3g} above threshold {threshold:.3g}")
    sup = z.sup_norm()
    lam = capital_lambda(z, tol_rel)
    tol_nodal = NODAL_REL_TOL * sup
    if sup <= ZERO_TOL:
        cls = "zero"
    elif lam.k > 0:
        cls = "Eplus"
    else:
        cls = "E0"
    vanishes = sup > ZERO_TOL and interior_minimum(z) <= tol_nodal
    conflict = cls != "zero" and (cls == "Eplus") != vanishes
    if conflict:
        msg = (
            f"functional gives {cls} (lambda={lam.value:.6g}) but nodal test says "
            f"{'vanishes' if vanishes else 'positive'}; grid may be too coarse"
        )
        if strict:
            raise ClassificationConflict(msg)
        logger.warning(msg)
    return EquilibriumRecord(
        field=z,
        residual=residual,
        cls=cls,
        lam=lam,
        nodal_components=nodal_components(z, tol_nodal) if cls != "zero" else [],
        symmetry_defect=symmetry_defect(z),
        conflict=conflict,
        name=name,
    )


# --------------------------------------------------------------------------
# solving


DEFAULT_DAMPING = tuple(0.5**i for i in range(11))


def newton(
    f: Nonlinearity,
    guess: Field,
    *,
    damping: Sequence[float] = DEFAULT_DAMPING,
    max_iter: int = 60,
    tol: float = RESIDUAL_TOL,
) -> tuple[Field, float, int, bool]:
    """Damped Newton iteration; returns ``(z, residual, iterations, converged)``."""
    z = guess
    r = residual(z, f)
    rn = float(np.max(np.abs(r)))
    for it in range(1, max_iter + 1):
        if rn <= tol * max(1.0, z.sup_norm()):
            return z, rn, it - 1, True
        try:
            delta = spla.spsolve(jacobian(z, f).tocsc(), -r)
        except RuntimeError:
            return z, rn, it, False
        if not np.all(np.isfinite(delta)):
            return z, rn, it, False
        for alpha in damping:
            trial = Field(z.domain, z.values + alpha * delta)
            r_trial = residual(trial, f)
            rn_trial = float(np.max(np.abs(r_trial)))
            if rn_trial < (1 - 1e-4 * alpha) * rn:
                z, r, rn = trial, r_trial, rn_trial
                break
        else:
            return z, rn, it, rn <= tol * max(1.0, z.sup_norm())
    return z, rn, max_iter, rn <= tol * max(1.0, z.sup_norm())


def find_equilibrium(
    f: Nonlinearity,
    domain: Domain,
    guess: Field,
    damping: Sequence[float] = DEFAULT_DAMPING,
    *,
    max_iter: int = 60,
    tol: float = RESIDUAL_TOL,
    continuation_time: float = 400.0,
    blowup_ceiling: float | None = None,
    name: str = "",
    strict: bool = False,
) -> EquilibriumRecord:
    """Newton from ``guess``; falls back to pseudo-time integration when Newton stalls.

    Raises :class:`EquilibriumError` when neither phase converges.
    """
    if not guess.domain.same_as(domain):
        raise ValueError("guess lives on a different domain")
    z, rn, its, ok = newton(f, guess, damping=damping, max_iter=max_iter, tol=tol)
    method = "newton"
    if not ok:
        dt = 0.5 / max(1.0, f.lipschitz)
        ceiling = blowup_ceiling if blowup_ceiling is not None else 1e3 * guess.sup_norm() + 10
        start = Field(domain, np.maximum(guess.values, 0.0))
        traj = evolve(
            start, f, None,
            SolverParams(dt=dt, t_end=continuation_time, stride=10**9,
                         steady_tol=1e-9, blowup_ceiling=ceiling),
        )
        if traj.status == "blowup":
            raise EquilibriumError("pseudo-time continuation reached the blow-up ceiling")
        z, rn, its2, ok = newton(f, traj.final, damping=damping, max_iter=max_iter, tol=tol)
        its += its2
        method = "continuation"
        if not ok:
            raise EquilibriumError(f"no convergence: residual {rn:.3g} after Newton and continuation")
    rec = classify(z, rn, threshold=tol * max(1.0, z.sup_norm()), strict=strict, name=name)
    rec.method = method
    rec.iterations = its
    return rec


# --------------------------------------------------------------------------
# sweeps


def _guesses(domain: Domain, n: int, seed: int) -> list[tuple[str, Field]]:
    """Deterministic mix of initial guesses: zero, bumps, translates, cosine packets, random."""
    rng = np.random.default_rng(seed)
    xs = domain.coordinates()
    ell = domain.half_extent
    x1 = xs[:, 0]
    if domain.dim == 2:
        x2 = xs[:, 1]
        y_lo, y_hi = domain.x2[0], domain.x2[-1]
        bell2 = np.sin(np.pi * (x2 - y_lo) / (y_hi - y_lo))
    else:
        bell2 = 1.0
    out: list[tuple[str, Field]] = [("zero", domain.zeros())]
    kind = 0
    while len(out) < n:
        k = kind % 4
        if k == 0:
            height = rng.uniform(0.2, 3.0)
            width = rng.uniform(0.2, 1.0) * ell
            vals = height * np.exp(-(x1**2) / (2 * (width / 2) ** 2)) * bell2
            name = f"bump{len(out)}"
        elif k == 1:
            c = rng.uniform(-0.6, 0.6) * ell
            vals = rng.uniform(0.5, 3.0) * np.exp(-((x1 - c) ** 2) / (2 * (0.2 * ell) ** 2)) * bell2
            name = f"translate{len(out)}"
        elif k == 2:
            m = int(rng.integers(1, 6))
            amp = rng.uniform(0.5, 2.5)
            vals = amp * np.abs(np.cos(m * np.pi * x1 / (2 * ell))) * bell2
            name = f"cosine{len(out)}"
        else:
            vals = np.zeros_like(x1)
            for m in range(1, 7):
                vals += rng.normal() / m * np.sin(m * np.pi * (x1 + ell) / (2 * ell))
            vals = np.abs(vals) * rng.uniform(0.5, 3.0) / max(1e-12, np.abs(vals).max()) * bell2
            name = f"random{len(out)}"
        out.append((name, Field(domain, vals)))
        kind += 1
    return out[:n]


@dataclass
class SweepResult:
    records: list[EquilibriumRecord]
    failures: int
    discarded_negative: int
    n_guesses: int

    @property
    def eplus(self) -> list[EquilibriumRecord]:
        return [r for r in self.records if r.cls == "Eplus"]

    @property
    def e0(self) -> list[EquilibriumRecord]:
        return [r for r in self.records if r.cls == "E0"]

    @property
    def n_eplus(self) -> int:
        return len(self.eplus)

    def eplus_e0_distances(self) -> np.ndarray:
        """Sup-norm distances between every Eplus record (rows) and E0 record (columns)."""
        return np.array(
            [[float(np.max(np.abs(a.field.values - b.field.values))) for b in self.e0]
             for a in self.eplus]
        ).reshape(self.n_eplus, len(self.e0))


def equilibrium_sweep(
    f: Nonlinearity,
    domain: Domain,
    n_guesses: int,
    *,
    seed: int = 0,
    dedup_tol: float = DEDUP_TOL,
    jobs: int = 1,
    negative_tol: float = 1e-6,
) -> SweepResult:
    """Solve from many guesses and keep the distinct nonnegative equilibria.

    Converged states with a negative part below ``-negative_tol * sup`` lie
    outside the nonnegative setting and are counted but dropped.
    """
    if n_guesses < 1:
        raise ValueError("n_guesses must be at least 1")
    guesses = _guesses(domain, n_guesses, seed)

    def solve(item):
        name, g = item
        try:
            return find_equilibrium(f, domain, g, name=name)
        except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
            logger.info("guess %s failed: %s", name, exc)
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(solve, guesses))
    else:
        results = [solve(g) for g in guesses]

    records: list[EquilibriumRecord] = []
    failures = negatives = 0
    for rec in results:
        if rec is None:
            failures += 1
            continue
        if rec.field.values.min() < -negative_tol * max(1.0, rec.sup_norm):
            negatives += 1
            continue
        if any(np.max(np.abs(rec.field.values - r.field.values)) <= dedup_tol for r in records):
            continue
        records.append(rec)
    records.sort(key=lambda r: (-r.lam.value, r.sup_norm))
    return SweepResult(records, failures, negatives, n_guesses)


# --------------------------------------------------------------------------
# symmetry of equilibria


@dataclass
class SymmetryCheck:
    global_defect: float
    global_ok: bool
    component_centres: list[float]
    component_defects: list[float]
    components_ok: bool

    @property
    def passed(self) -> bool:
        return self.global_ok and self.components_ok


def check_equilibrium_symmetry(
    record: EquilibriumRecord,
    *,
    tol_rel: float = 1e-6,
    component_tol_rel: float = 1e-3,
) -> SymmetryCheck:
    """Global x1-symmetry, and for Eplus records symmetry of each nodal component.

    Each positive component is reflected about the midpoint of its own x1
    extent (separately per x1 line in 2D).
    """
    threshold = RESIDUAL_TOL * max(1.0, record.sup_norm)
    if record.residual > threshold:
        raise ValueError("record is not a converged equilibrium")
    z = record.field
    sup = z.sup_norm()
    gd = symmetry_defect(z)
    centres, defects = [], []
    if record.cls == "Eplus":
        domain = z.domain
        zg = z.grid()
        multi = domain.interior_multi_index()
        for comp in record.nodal_components:
            i1 = multi[0][comp]
            lo, hi = int(i1.min()), int(i1.max())
            centres.append(float((domain.x1[lo] + domain.x1[hi]) / 2))
            worst = 0.0
            mirror = lo + hi - i1
            if domain.dim == 1:
                worst = float(np.max(np.abs(zg[i1] - zg[mirror])))
            else:
                i2 = multi[1][comp]
                worst = float(np.max(np.abs(zg[i1, i2] - zg[mirror, i2])))
            defects.append(worst)
    return SymmetryCheck(
        global_defect=gd,
        global_ok=gd <= tol_rel * max(sup, 1e-300),
        component_centres=centres,
        component_defects=defects,
        components_ok=all(d <= component_tol_rel * sup for d in defects),
    )


# --------------------------------------------------------------------------
# linearization and principal eigenpair


@dataclass
class LinearizedOperator:
    """``L = Δ_h + b·∇_h + c`` obtained by linearizing ``f`` at an equilibrium."""

    domain: Domain
    coeffs: LinearCoefficients

    @property
    def matrix(self) -> sp.csr_matrix:
        return linear_operator_matrix(self.domain, self.coeffs)

    def apply(self, v: Field) -> Field:
        return Field(self.domain, self.matrix @ v.values)

    def propagate(self, v: Field, dt: float, scheme: str = "imex") -> Field:
        return linear_step(v, self.coeffs, dt, scheme=scheme)


def linearize_at(z: Field, f: Nonlinearity) -> LinearizedOperator:
    return LinearizedOperator(z.domain, linearization_coefficients(z, f))


class EigenError(RuntimeError):
    pass


def leading_eigenpair(
    L: LinearizedOperator,
    *,
    tol: float = 1e-12,
    max_iter: int = 20_000,
    seed: int = 0,
) -> tuple[float, Field]:
    """Principal eigenpair by power iteration through the implicit propagator.

    Iterates ``v <- (I - dt L)^{-1} v`` with ``1/dt`` above the spectrum, so
    the dominant mode is the eigenfunction with the largest eigenvalue.  The
    eigenvalue is the Rayleigh quotient of ``L``; the eigenfield is scaled to
    unit sup norm, with sign chosen to make it nonnegative where possible.
    """
    domain = L.domain
    c = L.coeffs.c
    b_bound = 0.0 if L.coeffs.b is None else float(np.max(np.abs(L.coeffs.b), initial=0.0))
    shift = float(np.max(c, initial=0.0)) + 0.5 + b_bound
    dt = 1.0 / shift
    mat = L.matrix
    lu = spla.splu((sp.identity(domain.n_interior, format="csc") - dt * mat).tocsc())
    rng = np.random.default_rng(seed)
    v = 1.0 + 0.1 * rng.random(domain.n_interior)
    v /= np.max(np.abs(v))
    for _ in range(max_iter):
        w = lu.solve(v)
        if np.sum(w) < 0:
            w = -w
        w /= np.max(np.abs(w))
        change = float(np.max(np.abs(w - v)))
        v = w
        if change < tol:
            break
    else:
        raise EigenError(f"power iteration did not converge (last change {change:.3g})")
    sigma = float(v @ (mat @ v) / (v @ v))
    if abs(v.min()) > abs(v.max()):
        v = -v / np.max(np.abs(v))
    return sigma, Field(domain, v)
