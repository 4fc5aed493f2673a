"""Discrete x1-symmetric domains and fields living on them.

Nodes sit on a uniform grid of spacing ``h`` whose x1 coordinates are
symmetric about zero, so reflecting a node about any plane ``x1 = k*h/2``
lands exactly on another node.  The domain is the set of *interior* nodes;
everything else (boundary and exterior nodes) carries the Dirichlet value 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import ndimage


class DomainError(ValueError):
    """Raised when a domain description violates symmetry or convexity."""


_FOUR_CONNECTED = {
    1: np.ones(3, dtype=bool),
    2: ndimage.generate_binary_structure(2, 1),
}


@dataclass(frozen=True, eq=False)
class Domain:
    """Union-of-cells domain, symmetric in x1 and convex along every x1 line.

    Grid arrays are indexed ``[i1]`` in 1D and ``[i1, i2]`` in 2D; axis 0 is
    always x1.  ``offset`` is the integer such that node ``i1`` maps to
    ``k + offset - i1`` under reflection about ``x1 = k*h/2``.
    """

    dim: int
    h: float
    half_extent: float
    x1: np.ndarray
    mask: np.ndarray
    offset: int
    x2: np.ndarray | None = None
    row_extents: tuple[float, ...] | None = None
    _component_counts: np.ndarray = field(default=None, repr=False)
    _component_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for arr in (self.x1, self.mask, self.x2):
            if arr is not None:
                arr.setflags(write=False)
        flat = np.flatnonzero(self.mask.ravel())
        object.__setattr__(self, "_interior_flat", flat)
        index_grid = np.full(self.mask.shape, -1, dtype=np.int64)
        index_grid.ravel()[flat] = np.arange(flat.size)
        index_grid.setflags(write=False)
        object.__setattr__(self, "_index_grid", index_grid)
        self._validate()
        counts = np.array(
            [self._label_cap(k)[1] for k in range(self.k_max + 1)], dtype=np.int64
        )
        counts.setflags(write=False)
        object.__setattr__(self, "_component_counts", counts)

    # -- geometry ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def n_interior(self) -> int:
        return int(self._interior_flat.size)

    @property
    def index_grid(self) -> np.ndarray:
        """Grid-shaped array holding the interior index of each node, -1 outside."""
        return self._index_grid

    @property
    def k_max(self) -> int:
        """Half-grid index of ``lambda = ell``."""
        return int(round(2 * self.half_extent / self.h))

    def interior_multi_index(self) -> tuple[np.ndarray, ...]:
        return np.unravel_index(self._interior_flat, self.mask.shape)

    def coordinates(self) -> np.ndarray:
        """Coordinates of interior nodes, shape ``(n_interior, dim)``."""
        idx = self.interior_multi_index()
        cols = [self.x1[idx[0]]]
        if self.dim == 2:
            cols.append(self.x2[idx[1]])
        return np.column_stack(cols)

    def lambda_value(self, k: int) -> float:
        return k * self.h / 2

    def cap_mask(self, k: int) -> np.ndarray:
        """Grid mask of ``Omega_lambda = {x in Omega : x1 > k*h/2}``."""
        # x1 of node i1 equals (2*i1 - offset) * h/2, so compare integers
        above = 2 * np.arange(self.mask.shape[0]) - self.offset > k
        if self.dim == 2:
            above = above[:, None]
        return self.mask & above

    def cap_indices(self, k: int) -> np.ndarray:
        """Interior indices of the nodes of ``Omega_lambda``."""
        return self._index_grid[self.cap_mask(k)]

    def reflected_i1(self, k: int, i1: np.ndarray | int) -> np.ndarray | int:
        return k + self.offset - i1

    def mirror_indices(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Interior indices of the cap and of their mirror images.

        Mirror images that fall outside the interior get index -1, meaning the
        Dirichlet zero value applies there.
        """
        cap = self.cap_mask(k)
        multi = np.nonzero(cap)
        src = self._index_grid[multi]
        j1 = self.reflected_i1(k, multi[0])
        inside = (j1 >= 0) & (j1 < self.mask.shape[0])
        dst = np.full(src.shape, -1, dtype=np.int64)
        if self.dim == 1:
            dst[inside] = self._index_grid[j1[inside]]
        else:
            dst[inside] = self._index_grid[j1[inside], multi[1][inside]]
        return src, dst

    # -- components ---------------------------------------------------------

    def _label_cap(self, k: int) -> tuple[np.ndarray, int]:
        return ndimage.label(self.cap_mask(k), structure=_FOUR_CONNECTED[self.dim])

    def component_count(self, k: int) -> int:
        return int(self._component_counts[k])

    @property
    def component_counts(self) -> np.ndarray:
        return self._component_counts

    def field(self, func_or_values) -> "Field":
        """Build a field from a callable of interior coordinates or from raw values."""
        if callable(func_or_values):
            xs = self.coordinates()
            vals = func_or_values(*xs.T)
        else:
            vals = func_or_values
        return Field(self, np.asarray(vals, dtype=float))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_interior))

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        if self.dim not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.dim}")
        if not np.allclose(self.x1 + self.x1[::-1], 0.0, atol=1e-12 * self.half_extent):
            raise DomainError("x1 coordinates are not symmetric about 0")
        if not np.array_equal(self.mask, self.mask[::-1]):
            raise DomainError("mask is not symmetric under x1 -> -x1")
        lines = self.mask[:, None] if self.dim == 1 else self.mask
        for j in range(lines.shape[1]):
            col = lines[:, j].astype(np.int8)
            if col.any() and np.count_nonzero(np.diff(col) == 1) + col[0] > 1:
                raise DomainError(f"x1 line {j} meets the domain in more than one run")
        if self.n_interior == 0:
            raise DomainError("domain has no interior nodes")
        _, n = ndimage.label(self.mask, structure=_FOUR_CONNECTED[self.dim])
        if n != 1:
            raise DomainError(f"domain is disconnected ({n} components)")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "parasym-domain",
            "version": 1,
            "dim": self.dim,
            "h": self.h,
            "half_extent": self.half_extent,
            "shape": list(self.mask.shape),
            "offset": self.offset,
            "x2_min": None if self.x2 is None else float(self.x2[0]),
            "row_extents": None if self.row_extents is None else list(self.row_extents),
            "mask_rle": rle_encode(self.mask.ravel()),
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Domain":
        if doc.get("format") != "parasym-domain":
            raise DomainError("not a parasym domain document")
        shape = tuple(doc["shape"])
        mask = rle_decode(doc["mask_rle"], int(np.prod(shape))).reshape(shape)
        h = doc["h"]
        n1 = shape[0]
        offset = int(doc["offset"])
        x1 = _x1_coordinates(n1, offset, h)
        x2 = None
        if doc["dim"] == 2:
            x2 = doc["x2_min"] + h * np.arange(shape[1])
        rows = doc.get("row_extents")
        return cls(
            dim=doc["dim"],
            h=h,
            half_extent=doc["half_extent"],
            x1=x1,
            mask=mask,
            offset=offset,
            x2=x2,
            row_extents=None if rows is None else tuple(rows),
        )

    @classmethod
    def from_text(cls, text: str) -> "Domain":
        return cls.from_dict(json.loads(text))

    def same_as(self, other: "Domain") -> bool:
        return (
            self is other
            or (
                self.dim == other.dim
                and self.h == other.h
                and self.half_extent == other.half_extent
                and np.array_equal(self.mask, other.mask)
                and np.array_equal(self.x1, other.x1)
            )
        )


@dataclass(frozen=True, eq=False)
class Field:
    """Values on the interior nodes of a domain; zero on and outside the boundary."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.domain.n_interior,):
            raise ValueError(
                f"expected {self.domain.n_interior} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def grid(self) -> np.ndarray:
        """Values scattered onto the full grid (zero outside the interior)."""
        out = np.zeros(self.domain.shape)
        out.ravel()[self.domain._interior_flat] = self.values
        return out

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values) -> "Field":
        return Field(self.domain, values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.domain, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        return Field(self.domain, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.domain, self.values - other.values)


def _x1_coordinates(n1: int, offset: int, h: float) -> np.ndarray:
    # node i1 sits at (2*i1 - offset) * h/2; exact antisymmetry about 0
    return (2 * np.arange(n1) - offset) * (h / 2)


def rle_encode(flags: np.ndarray) -> list[int]:
    """Run lengths of a boolean vector, starting with a run of False."""
    flags = np.asarray(flags, dtype=bool)
    change = np.flatnonzero(np.diff(flags.astype(np.int8))) + 1
    edges = np.concatenate([[0], change, [flags.size]])
    runs = np.diff(edges).tolist()
    if flags.size and flags[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos, value = 0, False
    for r in runs:
        out[pos : pos + r] = value
        pos += r
        value = not value
    if pos != size:
        raise DomainError(f"run-length encoding covers {pos} nodes, expected {size}")
    return out


def build_interval(half_length: float, n_cells: int) -> Domain:
    """1D domain ``(-half_length, half_length)`` split into ``n_cells`` cells.

    Nodes are ``-half_length + j*h`` for ``j = 0..n_cells``; the two end nodes
    are boundary nodes.
    """
    if half_length <= 0:
        raise DomainError("half_length must be positive")
    if n_cells < 8:
        raise DomainError("n_cells must be at least 8")
    if n_cells % 2:
        raise DomainError("n_cells must be even so that x1 = 0 is a node")
    h = 2 * half_length / n_cells
    x1 = _x1_coordinates(n_cells + 1, n_cells, h)
    mask = np.ones(n_cells + 1, dtype=bool)
    mask[[0, -1]] = False
    return Domain(
        dim=1, h=h, half_extent=float(half_length), x1=x1, mask=mask, offset=n_cells
    )


def _row_half_width(row, h: float) -> int:
    """Normalize a row description to its half-width in cells."""
    if np.ndim(row) == 0:
        intervals = [(-float(row), float(row))]
    elif np.ndim(row) == 1 and len(row) == 2:
        intervals = [(float(row[0]), float(row[1]))]
    else:
        intervals = [tuple(map(float, iv)) for iv in row]
    if len(intervals) != 1:
        raise DomainError(
            f"row {row!r} is not a single interval; convexity in x1 violated"
        )
    lo, hi = intervals[0]
    if hi <= 0 or not np.isclose(lo, -hi, rtol=0, atol=1e-9 * max(1.0, hi)):
        raise DomainError(f"row extent {row!r} is not a symmetric interval [-a, a]")
    m = hi / h
    if abs(m - round(m)) > 1e-9 * max(1.0, m):
        raise DomainError(f"row extent {hi} is not a multiple of h={h}")
    return int(round(m))


def build_symmetric_2d(cell_rows: Sequence, h: float = 1.0) -> Domain:
    """2D union of cells given row by row (bottom to top).

    Row ``i`` covers ``[-a_i, a_i] x [i*h, (i+1)*h]``.  A row may be given as
    the number ``a_i`` or as a list of ``(lo, hi)`` intervals, which must then
    be the single interval ``(-a_i, a_i)``.
    """
    if len(cell_rows) < 2:
        raise DomainError("need at least two rows of cells to have interior nodes")
    m = [_row_half_width(r, h) for r in cell_rows]
    big = max(m)
    n_rows = len(m)
    i1 = np.arange(-big, big + 1)
    x1 = _x1_coordinates(2 * big + 1, 2 * big, h)
    x2 = np.arange(n_rows + 1) * h
    mask = np.zeros((2 * big + 1, n_rows + 1), dtype=bool)
    for line in range(1, n_rows):
        width = min(m[line - 1], m[line])
        mask[:, line] = np.abs(i1) < width
    return Domain(
        dim=2,
        h=float(h),
        half_extent=float(big * h),
        x1=x1,
        mask=mask,
        offset=2 * big,
        x2=x2,
        row_extents=tuple(mi * h for mi in m),
    )


def reflect(domain: Domain, lam: float, node: Sequence[int]) -> tuple[tuple[int, ...], bool]:
    """Reflect a grid node about ``x1 = lam``.

    ``node`` is a grid multi-index.  Returns the multi-index of
    ``(2*lam - x1, x')`` and whether that node is interior.  The returned
    index may lie outside the stored grid, in which case it is exterior.
    """
    k = half_grid_index(domain, lam)
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != domain.dim:
        raise ValueError(f"node must have {domain.dim} indices")
    j1 = domain.reflected_i1(k, node[0])
    image = (j1,) + node[1:]
    inside = 0 <= j1 < domain.shape[0] and bool(domain.mask[image])
    return image, inside


def half_grid_index(domain: Domain, lam: float) -> int:
    """Integer ``k`` with ``lam == k*h/2``; rejects values off the half-grid."""
    k = 2 * lam / domain.h
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, abs(k)) or kr < 0:
        raise ValueError(f"lambda={lam} is not a nonnegative multiple of h/2={domain.h / 2}")
    return kr


def omega_lambda_components(domain: Domain, lam: float) -> list[np.ndarray]:
    """Connected components of the cap ``Omega_lambda`` as interior-index arrays."""
    k = half_grid_index(domain, lam)
    if k >= domain.k_max:
        return []
    cached = domain._component_cache.get(k)
    if cached is None:
        labels, n = domain._label_cap(k)
        cached = tuple(
            np.sort(domain.index_grid[labels == c]) for c in range(1, n + 1)
        )
        domain._component_cache[k] = cached
    return list(cached)
