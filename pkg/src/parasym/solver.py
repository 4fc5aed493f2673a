"""IMEX time stepping for ``u_t = Δu + f(x, u, ∇u) + h(x, t)`` with zero Dirichlet data.

Each step solves ``(I - dt Δ_h) u⁺ = u + dt (f(x, u, ∇_h u) + h(x, t))``.
``Δ_h`` is the 3-point (1D) or 5-point (2D) Laplacian on interior nodes,
``∇_h`` the centred difference, one-sided next to the boundary.
"""

from __future__ import annotations

import logging
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Domain, Field
from .nonlinearity import Forcing, Nonlinearity, forcing_get

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class LinearSolveError(SolverError):
    pass


# --------------------------------------------------------------------------
# grid operators


class GridOperators:
    """Sparse Laplacian and gradient matrices of a domain, plus cached solvers."""

    def __init__(self, domain: Domain):
        self.domain = domain
        self.coords = domain.coordinates()
        self.laplacian = _assemble_laplacian(domain)
        self.gradients = [_assemble_gradient(domain, a) for a in range(domain.dim)]
        self._solvers: dict = {}
        self._lock = threading.Lock()

    def gradient(self, values: np.ndarray) -> np.ndarray:
        return np.column_stack([g @ values for g in self.gradients])

    def implicit_solver(self, dt: float, method: str = "direct", rtol: float = 1e-12,
                        maxiter: int = 10_000) -> Callable[[np.ndarray, np.ndarray | None], np.ndarray]:
        key = (dt, method, rtol, maxiter)
        with self._lock:
            solve = self._solvers.get(key)
            if solve is None:
                matrix = (sp.identity(self.domain.n_interior, format="csc") - dt * self.laplacian).tocsc()
                solve = _make_solver(matrix, method, rtol, maxiter)
                self._solvers[key] = solve
        return solve


def _make_solver(matrix: sp.spmatrix, method: str, rtol: float, maxiter: int):
    if method == "direct":
        lu = spla.splu(matrix)
        return lambda rhs, x0=None: lu.solve(rhs)
    if method == "cg":
        def solve(rhs, x0=None):
            x, info = spla.cg(matrix, rhs, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter)
            if info != 0:
                raise LinearSolveError(f"conjugate gradients did not converge (info={info})")
            return x

        return solve
    raise ValueError(f"unknown linear solver {method!r}")


_OPERATORS: "weakref.WeakKeyDictionary[Domain, GridOperators]" = weakref.WeakKeyDictionary()
_OPERATORS_LOCK = threading.Lock()


def operators(domain: Domain) -> GridOperators:
    with _OPERATORS_LOCK:
        ops = _OPERATORS.get(domain)
        if ops is None:
            ops = GridOperators(domain)
            _OPERATORS[domain] = ops
    return ops


def _neighbours(domain: Domain, axis: int, step: int) -> np.ndarray:
    """Interior index of the neighbour of each interior node (-1 if not interior)."""
    multi = list(domain.interior_multi_index())
    multi[axis] = multi[axis] + step
    n_axis = domain.shape[axis]
    ok = (multi[axis] >= 0) & (multi[axis] < n_axis)
    out = np.full(domain.n_interior, -1, dtype=np.int64)
    clipped = [np.clip(m, 0, s - 1) for m, s in zip(multi, domain.shape)]
    idx = domain.index_grid[tuple(clipped)]
    out[ok] = idx[ok]
    return out


def _assemble_laplacian(domain: Domain) -> sp.csr_matrix:
    n = domain.n_interior
    inv_h2 = 1.0 / domain.h**2
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, -2.0 * domain.dim * inv_h2)]
    for axis in range(domain.dim):
        for step in (-1, 1):
            nb = _neighbours(domain, axis, step)
            ok = nb >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(nb[ok])
            vals.append(np.full(ok.sum(), inv_h2))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _assemble_gradient(domain: Domain, axis: int) -> sp.csr_matrix:
    n = domain.n_interior
    h = domain.h
    left = _neighbours(domain, axis, -1)
    right = _neighbours(domain, axis, +1)
    both = (left >= 0) & (right >= 0)
    only_right = (left < 0) & (right >= 0)
    only_left = (left >= 0) & (right < 0)
    ar = np.arange(n)
    rows = np.concatenate([ar[both], ar[both], ar[only_right], ar[only_right], ar[only_left], ar[only_left]])
    cols = np.concatenate([right[both], left[both], right[only_right], ar[only_right], ar[only_left], left[only_left]])
    vals = np.concatenate([
        np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h),
        np.full(only_right.sum(), 1 / h), np.full(only_right.sum(), -1 / h),
        np.full(only_left.sum(), 1 / h), np.full(only_left.sum(), -1 / h),
    ])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# --------------------------------------------------------------------------
# parameters and trajectories


@dataclass(frozen=True)
class SolverParams:
    dt: float
    t_end: float
    stride: int = 1
    linear_tol: float = 1e-12
    max_linear_iter: int = 10_000
    linear_solver: str = "direct"
    blowup_ceiling: float | None = None
    steady_tol: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.linear_tol > 1e-10:
            raise ValueError("linear_tol must be at most 1e-10")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def comparison_safe(self, f: Nonlinearity) -> bool:
        """Whether ``dt <= 1/(2 beta0)``, the restriction behind the discrete comparison principle."""
        return f.lipschitz == 0 or self.dt <= 1.0 / (2.0 * f.lipschitz)


@dataclass
class Trajectory:
    domain: Domain
    nonlinearity: Nonlinearity
    forcing: Forcing
    params: SolverParams
    times: list[float] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    step_times: list[float] = field(default_factory=list)
    min_u: list[float] = field(default_factory=list)
    max_u: list[float] = field(default_factory=list)
    sup_u: list[float] = field(default_factory=list)
    observations: dict[str, list[float]] = field(default_factory=dict)
    status: str = "running"
    meta: dict = field(default_factory=dict)

    def field_at(self, i: int) -> Field:
        return Field(self.domain, self.snapshots[i])

    @property
    def final(self) -> Field:
        return self.field_at(-1)

    @property
    def completed(self) -> bool:
        return self.status in ("completed", "steady")

    def __len__(self) -> int:
        return len(self.snapshots)


# --------------------------------------------------------------------------
# stepping


def _reaction(u: Field, f: Nonlinearity, forcing: Forcing | None, t: float) -> np.ndarray:
    ops = operators(u.domain)
    grad = ops.gradient(u.values) if f.uses_gradient else np.zeros_like(ops.coords)
    r = f(ops.coords, u.values, grad)
    if forcing is not None and not forcing.is_zero:
        r = r + forcing(ops.coords, t)
    return r


def step(
    u: Field,
    f: Nonlinearity,
    forcing: Forcing | None,
    t: float,
    dt: float,
    *,
    linear_solver: str = "direct",
    linear_tol: float = 1e-12,
    max_linear_iter: int = 10_000,
) -> Field:
    """One IMEX step from time ``t`` to ``t + dt``."""
    ops = operators(u.domain)
    rhs = u.values + dt * _reaction(u, f, forcing, t)
    solve = ops.implicit_solver(dt, linear_solver, linear_tol, max_linear_iter)
    new = solve(rhs, u.values)
    if not np.all(np.isfinite(new)):
        raise SolverError(f"non-finite values after step at t={t + dt:g}")
    return Field(u.domain, new)


Observer = Callable[[float, Field], float]


def evolve(
    u0: Field,
    f: Nonlinearity,
    forcing: Forcing | None,
    params: SolverParams,
    observers: Mapping[str, Observer] | None = None,
    *,
    negative_tol: float = 1e-8,
) -> Trajectory:
    """Integrate from ``u0`` to ``params.t_end``.

    Snapshots are kept every ``params.stride`` steps (and at the end).  A
    run whose sup norm exceeds the blow-up ceiling is stopped with status
    ``"blowup"``; with ``params.steady_tol`` set, a run whose increments fall
    below ``steady_tol * dt`` stops early with status ``"steady"``.
    """
    forcing = forcing if forcing is not None else forcing_get("none")
    values = np.asarray(u0.values, dtype=float)
    floor = -negative_tol * max(1.0, u0.sup_norm())
    if values.size and values.min() < floor:
        raise ValueError(f"initial data has negative values down to {values.min():.3g}")
    if values.size and values.min() < 0:
        logger.warning("clipping initial data negative part (min %.3g) to zero", values.min())
        values = np.maximum(values, 0.0)
    u = Field(u0.domain, values)
    ceiling = params.blowup_ceiling
    if ceiling is None:
        ceiling = 1e3 * u.sup_norm() + 10.0

    traj = Trajectory(u0.domain, f, forcing, params)
    observers = dict(observers or {})
    for name in observers:
        traj.observations[name] = []

    def record_step(t, field_):
        v = field_.values
        traj.step_times.append(t)
        traj.min_u.append(float(v.min()))
        traj.max_u.append(float(v.max()))
        traj.sup_u.append(field_.sup_norm())

    def snapshot(t, field_):
        traj.times.append(t)
        traj.snapshots.append(field_.values.copy())
        for name, obs in observers.items():
            traj.observations[name].append(float(obs(t, field_)))

    record_step(0.0, u)
    snapshot(0.0, u)
    n_steps = params.n_steps
    status = "completed"
    t = 0.0
    for n in range(1, n_steps + 1):
        t_prev = (n - 1) * params.dt
        new = step(
            u, f, forcing, t_prev, params.dt,
            linear_solver=params.linear_solver,
            linear_tol=params.linear_tol,
            max_linear_iter=params.max_linear_iter,
        )
        t = n * params.dt
        increment = float(np.max(np.abs(new.values - u.values))) if new.values.size else 0.0
        u = new
        record_step(t, u)
        if u.sup_norm() > ceiling:
            logger.warning("blow-up guard tripped at t=%g (sup=%g)", t, u.sup_norm())
            snapshot(t, u)
            status = "blowup"
            break
        steady = params.steady_tol is not None and increment <= params.steady_tol * params.dt
        if n % params.stride == 0 or n == n_steps or steady:
            snapshot(t, u)
        if steady:
            status = "steady"
            break
    traj.status = status
    return traj


# --------------------------------------------------------------------------
# linear problems


@dataclass(frozen=True)
class LinearCoefficients:
    """Coefficients of ``L = Δ + b·∇ + c``; ``b`` has shape ``(n, dim)``, ``c`` shape ``(n,)``."""

    c: np.ndarray
    b: np.ndarray | None = None

    def bound(self) -> float:
        bb = 0.0 if self.b is None else float(np.max(np.abs(self.b), initial=0.0))
        return max(bb, float(np.max(np.abs(self.c), initial=0.0)))


def linear_operator_matrix(domain: Domain, coeffs: LinearCoefficients) -> sp.csr_matrix:
    ops = operators(domain)
    mat = ops.laplacian + sp.diags(coeffs.c)
    if coeffs.b is not None:
        for a, g in enumerate(ops.gradients):
            mat = mat + sp.diags(coeffs.b[:, a]) @ g
    return mat.tocsr()


def linear_step(
    v: Field,
    coeffs: LinearCoefficients,
    dt: float,
    *,
    source: Callable[[np.ndarray, float], np.ndarray] | None = None,
    t: float = 0.0,
    scheme: str = "imex",
) -> Field:
    """One step of ``v_t = Δv + b·∇v + c v (+ source)`` with zero Dirichlet data.

    ``scheme="imex"`` treats only Δ implicitly (as :func:`step` does);
    ``scheme="implicit"`` is backward Euler for the whole operator.
    """
    ops = operators(v.domain)
    rhs = v.values.copy()
    if source is not None:
        rhs = rhs + dt * source(ops.coords, t)
    if scheme == "imex":
        explicit = coeffs.c * v.values
        if coeffs.b is not None:
            explicit = explicit + np.einsum("na,na->n", coeffs.b, ops.gradient(v.values))
        new = ops.implicit_solver(dt)(rhs + dt * explicit)
    elif scheme == "implicit":
        mat = sp.identity(v.domain.n_interior, format="csc") - dt * linear_operator_matrix(v.domain, coeffs)
        new = spla.spsolve(mat.tocsc(), rhs)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not np.all(np.isfinite(new)):
        raise SolverError("non-finite values in linear step")
    return Field(v.domain, new)


def negative_part_decay(
    domain: Domain,
    v0: Field,
    coeffs: LinearCoefficients,
    dt: float,
    t_end: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Evolve a linear problem and fit an exponential rate to ``||v⁻(t)||_inf``.

    Returns times, negative-part norms, and the least-squares decay rate of
    the log norms (positive means decay).
    """
    times, norms = [0.0], [float(np.max(np.maximum(-v0.values, 0.0)))]
    v = v0
    for n in range(1, int(round(t_end / dt)) + 1):
        v = linear_step(v, coeffs, dt)
        times.append(n * dt)
        norms.append(float(np.max(np.maximum(-v.values, 0.0))))
    times, norms = np.array(times), np.array(norms)
    ok = norms > 1e-280
    rate = float(-np.polyfit(times[ok], np.log(norms[ok]), 1)[0]) if ok.sum() >= 2 else np.inf
    return times, norms, rate


# --------------------------------------------------------------------------
# diagnostics


def holder_quotient(
    traj: Trajectory,
    window: tuple[float, float] | None = None,
    alpha: float = 0.5,
    *,
    n_pairs: int = 20_000,
    seed: int = 0,
) -> float:
    """Largest sampled ``|u(x,t) - u(y,s)| / (|x-y|^alpha + |t-s|^(alpha/2))``.

    Pairs are drawn from the snapshots inside ``window``; neighbouring nodes
    at equal times are always included.  Coincident pairs are skipped.
    """
    times = np.asarray(traj.times)
    lo, hi = window if window is not None else (times[0], times[-1])
    sel = np.flatnonzero((times >= lo) & (times <= hi))
    if sel.size < 2:
        raise ValueError("need at least two snapshots in the window")
    coords = operators(traj.domain).coords
    data = np.array([traj.snapshots[i] for i in sel])
    ts = times[sel]
    rng = np.random.default_rng(seed)
    n_nodes = coords.shape[0]
    a = rng.integers(0, sel.size, n_pairs), rng.integers(0, n_nodes, n_pairs)
    b = rng.integers(0, sel.size, n_pairs), rng.integers(0, n_nodes, n_pairs)
    # nearest-neighbour pairs along x1 at a common time
    nb = _neighbours(traj.domain, 0, 1)
    has = np.flatnonzero(nb >= 0)
    tsel = rng.integers(0, sel.size, has.size)
    a = np.concatenate([a[0], tsel]), np.concatenate([a[1], has])
    b = np.concatenate([b[0], tsel]), np.concatenate([b[1], nb[has]])
    num = np.abs(data[a] - data[b])
    dx = np.linalg.norm(coords[a[1]] - coords[b[1]], axis=1)
    dt = np.abs(ts[a[0]] - ts[b[0]])
    den = dx**alpha + dt ** (alpha / 2)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if ok.any() else 0.0


# --------------------------------------------------------------------------
# manufactured-solution refinement


@dataclass
class RefinementStudy:
    spatial: list[dict]
    temporal: list[dict]

    @staticmethod
    def _orders(rows, key) -> list[float]:
        out = []
        for a, b in zip(rows, rows[1:]):
            ratio = a[key] / b[key]
            out.append(float(np.log(a["error"] / b["error"]) / np.log(ratio)))
        return out

    @property
    def spatial_orders(self) -> list[float]:
        return self._orders(self.spatial, "h")

    @property
    def temporal_orders(self) -> list[float]:
        return self._orders(self.temporal, "dt")

    def rows(self) -> list[dict]:
        return [{"kind": "spatial", **r} for r in self.spatial] + [
            {"kind": "temporal", **r} for r in self.temporal
        ]


def decaying_cosine_study(
    n_cells: tuple[int, ...] = (32, 64, 128, 256),
    dts: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125),
    t_end: float = 1.0,
    *,
    dt_spatial: float = 0.01,
    n_temporal: int = 64,
) -> RefinementStudy:
    """Refinement study for ``u = e^{-t} cos x`` on ``(-pi/2, pi/2)`` with ``f = 0``.

    The two error sources are separated.  Spatial errors compare the computed
    solution with the time-discrete reference ``(1 + dt)^{-n} cos x``, which
    shares the time error of the scheme; temporal errors compare with the
    space-discrete reference ``exp(-mu_h t) cos x``, ``mu_h`` being the
    eigenvalue of the discrete Laplacian for this mode.
    """
    from .domain import build_interval
    from .nonlinearity import catalog_get

    zero = catalog_get("zero")

    def run(n, dt):
        dom = build_interval(np.pi / 2, n)
        u0 = dom.field(np.cos)
        traj = evolve(u0, zero, None, SolverParams(dt=dt, t_end=t_end, stride=10**9))
        return dom, traj.final.values, traj.times[-1]

    spatial = []
    for n in n_cells:
        dom, u, t = run(n, dt_spatial)
        steps = int(round(t / dt_spatial))
        ref = (1 + dt_spatial) ** (-steps) * np.cos(dom.coordinates()[:, 0])
        spatial.append({"n_cells": n, "h": dom.h, "dt": dt_spatial, "error": float(np.max(np.abs(u - ref)))})
    temporal = []
    for dt in dts:
        dom, u, t = run(n_temporal, dt)
        mu_h = 4 / dom.h**2 * np.sin(dom.h / 2) ** 2
        ref = np.exp(-mu_h * t) * np.cos(dom.coordinates()[:, 0])
        temporal.append({"n_cells": n_temporal, "h": dom.h, "dt": dt, "error": float(np.max(np.abs(u - ref)))})
    return RefinementStudy(spatial, temporal)
