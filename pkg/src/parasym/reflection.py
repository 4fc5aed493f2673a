"""Reflection differences and the moving-plane functional on grid fields.

For a half-grid plane ``lambda = k*h/2`` the reflection difference is
``V_lambda z(x) = z(P_lambda x) - z(x)`` on the cap ``x1 > lambda``.  The
functional ``capital_lambda`` returns the smallest half-grid ``lambda`` such
that every reflection difference with plane at or above ``lambda`` is
nonnegative up to a tolerance relative to ``||z||_inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .domain import Domain, Field, half_grid_index


@dataclass(frozen=True)
class HalfGridLambda:
    k: int
    h: float

    @property
    def value(self) -> float:
        return self.k * self.h / 2

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class LambdaResult:
    """Quantized value of the moving-plane functional.

    ``witness_mu`` / ``witness_node`` locate the most negative reflection
    difference on the plane just below ``lam`` (``witness_mu = lam - h/2``);
    both are ``None`` when ``lam == 0``.
    """

    lam: HalfGridLambda
    witness_mu: float | None
    witness_node: int | None
    witness_value: float | None
    tol_rel: float
    tol_abs: float

    @property
    def value(self) -> float:
        return self.lam.value

    @property
    def k(self) -> int:
        return self.lam.k

    def csv_row(self, time: float = float("nan")) -> dict:
        return {
            "time": time,
            "lambda": self.value,
            "witness_mu": "" if self.witness_mu is None else self.witness_mu,
            "witness_node": "" if self.witness_node is None else self.witness_node,
            "tol": self.tol_abs,
        }


LAMBDA_CSV_COLUMNS = ("time", "lambda", "witness_mu", "witness_node", "tol")


class CapValues(NamedTuple):
    indices: np.ndarray
    values: np.ndarray


def v_lambda(z: Field, lam: float) -> CapValues:
    """Reflection difference ``z(P_lam x) - z(x)`` at the interior nodes with ``x1 > lam``."""
    domain = z.domain
    k = half_grid_index(domain, lam)
    if k >= domain.k_max:
        raise ValueError("lambda must be smaller than the half extent")
    src, dst = domain.mirror_indices(k)
    ext = np.append(z.values, 0.0)
    return CapValues(src, ext[dst] - z.values[src])


def _cap_differences(zg: np.ndarray, mask: np.ndarray, offset: int, k: int):
    """Reflection differences on the cap of plane ``k`` as grid slices.

    Node ``i`` of the cap (``2*i - offset > k``) is paired with ``j = k +
    offset - i``.  Returns the first cap row ``i_lo`` and the difference array
    with non-interior cap nodes set to ``+inf``.
    """
    i_lo = (k + offset) // 2 + 1
    top = zg[i_lo:]
    mirror = zg[k : k + offset - i_lo + 1][::-1]
    diff = mirror - top
    return i_lo, np.where(mask[i_lo:], diff, np.inf)


def capital_lambda(z: Field, tol_rel: float = 1e-9) -> LambdaResult:
    """Moving-plane functional of ``z``, scanning planes downward from ``ell - h/2``."""
    if tol_rel < 0:
        raise ValueError("tol_rel must be nonnegative")
    domain = z.domain
    tol_abs = tol_rel * z.sup_norm()
    zg = z.grid()
    mask = domain.mask
    for k in range(domain.k_max - 1, 0, -1):
        i_lo, diff = _cap_differences(zg, mask, domain.offset, k)
        if diff.size == 0:
            continue
        flat = int(np.argmin(diff))
        vmin = diff.ravel()[flat]
        if vmin < -tol_abs:
            multi = np.unravel_index(flat, diff.shape)
            node = (multi[0] + i_lo,) + tuple(multi[1:])
            return LambdaResult(
                lam=HalfGridLambda(k + 1, domain.h),
                witness_mu=domain.lambda_value(k),
                witness_node=int(domain.index_grid[node]),
                witness_value=float(vmin),
                tol_rel=tol_rel,
                tol_abs=tol_abs,
            )
    return LambdaResult(HalfGridLambda(0, domain.h), None, None, None, tol_rel, tol_abs)


BRUTEFORCE_MAX_NODES = 10_000


def capital_lambda_bruteforce(z: Field, tol_rel: float = 1e-9) -> LambdaResult:
    """Exhaustive evaluation of the functional, for cross-checking only.

    Every plane and every node is visited; mirror nodes are located from
    coordinates rather than from the index arithmetic used by
    :func:`capital_lambda`.
    """
    domain = z.domain
    if domain.n_interior > BRUTEFORCE_MAX_NODES:
        raise ValueError(
            f"bruteforce limited to {BRUTEFORCE_MAX_NODES} interior nodes, "
            f"got {domain.n_interior}"
        )
    h = domain.h
    tol_abs = tol_rel * (float(np.max(np.abs(z.values))) if z.values.size else 0.0)
    coords = domain.coordinates()
    # doubled x1 and plain x2 in units of h are exact integers on this grid
    q1 = np.rint(2 * coords[:, 0] / h).astype(np.int64)
    q2 = (
        np.zeros(len(q1), dtype=np.int64)
        if domain.dim == 1
        else np.rint(coords[:, 1] / h).astype(np.int64)
    )
    lo1, lo2 = q1.min(), q2.min()
    lookup = np.full((q1.max() - lo1 + 1, q2.max() - lo2 + 1), -1, dtype=np.int64)
    lookup[q1 - lo1, q2 - lo2] = np.arange(len(q1))
    values = np.append(z.values, 0.0)

    worst_k, worst_node, worst_val = 0, None, None
    for k in range(1, domain.k_max):
        # all nodes, no early exit: nodes off the cap contribute +inf
        r1 = 2 * k - q1 - lo1
        found = (r1 >= 0) & (r1 < lookup.shape[0])
        mirror = np.full(len(q1), -1, dtype=np.int64)
        mirror[found] = lookup[r1[found], q2[found] - lo2]
        v = values[mirror] - values[:-1]
        v[q1 <= k] = np.inf
        n = int(np.argmin(v)) if v.size else 0
        if v.size and v[n] < -tol_abs:
            worst_k, worst_node, worst_val = k, n, v[n]
    if worst_node is None:
        return LambdaResult(HalfGridLambda(0, h), None, None, None, tol_rel, tol_abs)
    return LambdaResult(
        lam=HalfGridLambda(worst_k + 1, h),
        witness_mu=worst_k * h / 2,
        witness_node=int(worst_node),
        witness_value=float(worst_val),
        tol_rel=tol_rel,
        tol_abs=tol_abs,
    )


def symmetry_defect(z: Field) -> float:
    """``max |z(x) - z(-x1, x')|`` over the grid."""
    zg = z.grid()
    return float(np.max(np.abs(zg - zg[::-1]))) if zg.size else 0.0


def monotone_defect(z: Field, lam0: float = 0.0) -> float:
    """Largest increase of ``z`` between x1-neighbours inside ``x1 > lam0``.

    Zero exactly when ``z`` is nonincreasing in x1 on that cap.
    """
    if lam0 < 0:
        raise ValueError("lam0 must be nonnegative")
    domain = z.domain
    zg = z.grid()
    x1 = domain.x1 if domain.dim == 1 else domain.x1[:, None]
    inside = domain.mask & (x1 > lam0 + 1e-12 * domain.h)
    pair = inside[:-1] & inside[1:]
    if not pair.any():
        return 0.0
    rise = (zg[1:] - zg[:-1])[pair]
    return float(max(0.0, rise.max()))


def axis_slope_stats(z: Field) -> dict:
    """Slope statistics along the x1 line through the maximum, on ``x1 > 0``.

    Used to report (not assert) strict decrease.
    """
    domain = z.domain
    zg = z.grid()
    if domain.dim == 2:
        col = np.unravel_index(int(np.argmax(zg)), zg.shape)[1]
        line, mask = zg[:, col], domain.mask[:, col]
    else:
        line, mask = zg, domain.mask
    right = (domain.x1 >= 0) & mask
    vals = line[right]
    if vals.size < 2:
        return {"max_slope": 0.0, "min_drop": 0.0, "strict": False}
    slopes = np.diff(vals) / domain.h
    return {
        "max_slope": float(slopes.max()),
        "min_drop": float(-slopes.max()),
        "strict": bool(slopes.max() < 0),
    }
