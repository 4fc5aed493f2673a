"""Nonlinearities ``f(x, u, p)``, decaying forcing terms, and hypothesis checks.

Evaluators are vectorized: ``x`` and ``p`` have shape ``(n, dim)`` and ``u``
has shape ``(n,)``.  Every nonlinearity holds ``u`` inside a clamp range
before evaluating; below the range this is the extension
``f(x, u, p) = f(x, 0, p)`` for ``u < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

KINK_SLACK = 1e-7

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    func: Evaluator
    lipschitz: float
    u_range: tuple[float, float] = (0.0, np.inf)
    dfdu: Evaluator | None = None
    dfdp: Evaluator | None = None
    independent_of_x1: bool = True
    even_in_p1: bool = True
    uses_gradient: bool = False
    params: dict = field(default_factory=dict)
    holder_exponent: float | None = None

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, *self.u_range)

    def __call__(self, x, u, p) -> np.ndarray:
        return self.func(x, self.clamp(np.asarray(u, dtype=float)), p)

    def partial_u(self, x, u, p, step: float = 1e-6) -> np.ndarray:
        """``df/du``, zero outside the clamp range.

        Values within ``KINK_SLACK`` below the lower clamp get the one-sided
        derivative of the defined branch: discrete equilibria that touch zero
        dip below it by rounding-sized amounts.
        """
        u = np.asarray(u, dtype=float)
        lo, hi = self.u_range
        inside = (u >= lo - KINK_SLACK * max(1.0, abs(lo))) & (u < hi)
        if self.dfdu is not None:
            d = self.dfdu(x, self.clamp(u), p)
        else:
            scale = step * np.maximum(1.0, np.abs(u))
            d = (self(x, u + scale, p) - self(x, u - scale, p)) / (2 * scale)
        return np.where(inside, d, 0.0)

    def partial_p(self, x, u, p, step: float = 1e-6) -> np.ndarray:
        """``df/dp``, shape ``(n, dim)``."""
        p = np.asarray(p, dtype=float)
        if not self.uses_gradient:
            return np.zeros_like(p)
        if self.dfdp is not None:
            return self.dfdp(x, self.clamp(np.asarray(u, dtype=float)), p)
        out = np.empty_like(p)
        for a in range(p.shape[1]):
            e = np.zeros_like(p)
            scale = step * np.maximum(1.0, np.abs(p[:, a]))
            e[:, a] = scale
            out[:, a] = (self(x, u, p + e) - self(x, u, p - e)) / (2 * scale)
        return out


def _logistic() -> Nonlinearity:
    return Nonlinearity(
        name="logistic",
        func=lambda x, u, p: u * (1 - u),
        dfdu=lambda x, u, p: 1 - 2 * u,
        lipschitz=3.0,
        u_range=(0.0, 2.0),
    )


REMARK_B_U_HI = 3.5


def _remark_b_values(u: np.ndarray) -> np.ndarray:
    s = u - 2
    t = u - 3
    return np.select(
        [u <= 2, u <= 3, u <= REMARK_B_U_HI],
        [u - 1, (u - 1) - 3 * s**3, -1 - 8 * t + 8 * t**2],
        default=-3.0,
    )


def _remark_b_slope(u: np.ndarray) -> np.ndarray:
    s = u - 2
    t = u - 3
    return np.select(
        [u <= 2, u <= 3, u <= REMARK_B_U_HI],
        [np.ones_like(u), 1 - 9 * s**2, -8 + 16 * t],
        default=0.0,
    )


def _remark_b() -> Nonlinearity:
    # u - 1 up to u = 2, a C1 cubic bridge to f(3) = -1, then a quadratic that
    # flattens out at f = -3 from u = 3.5 on; |f'| <= 8 everywhere
    return Nonlinearity(
        name="remark_b",
        func=lambda x, u, p: _remark_b_values(u),
        dfdu=lambda x, u, p: _remark_b_slope(u),
        lipschitz=8.0,
        u_range=(0.0, REMARK_B_U_HI),
    )


def _allen_cahn(theta: float = 0.3) -> Nonlinearity:
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    u_hi = 1.5
    slope = lambda u: -3 * u**2 + 2 * (1 + theta) * u - theta  # noqa: E731
    probe = np.array([0.0, u_hi, (1 + theta) / 3])
    return Nonlinearity(
        name="allen_cahn",
        func=lambda x, u, p: u * (1 - u) * (u - theta),
        dfdu=lambda x, u, p: slope(u),
        lipschitz=float(np.max(np.abs(slope(probe)))),
        u_range=(0.0, u_hi),
        params={"theta": theta},
    )


def _gradient_even(eps: float = 0.1, p_max: float = 5.0) -> Nonlinearity:
    def func(x, u, p):
        p1 = np.clip(p[:, 0], -p_max, p_max)
        return u * (1 - u) + eps * p1**2

    def dfdp(x, u, p):
        out = np.zeros_like(p, dtype=float)
        inside = np.abs(p[:, 0]) < p_max
        out[:, 0] = np.where(inside, 2 * eps * p[:, 0], 0.0)
        return out

    return Nonlinearity(
        name="gradient_even",
        func=func,
        dfdu=lambda x, u, p: 1 - 2 * u,
        dfdp=dfdp,
        lipschitz=3.0 + 2 * eps * p_max,
        u_range=(0.0, 2.0),
        uses_gradient=True,
        params={"eps": eps, "p_max": p_max},
    )


def _zero() -> Nonlinearity:
    return Nonlinearity(
        name="zero",
        func=lambda x, u, p: np.zeros_like(u),
        dfdu=lambda x, u, p: np.zeros_like(u),
        lipschitz=0.0,
        u_range=(-np.inf, np.inf),
    )


def _linear(c: float = 1.0) -> Nonlinearity:
    return Nonlinearity(
        name="linear",
        func=lambda x, u, p: c * u,
        dfdu=lambda x, u, p: np.full_like(u, c),
        lipschitz=abs(c),
        u_range=(-np.inf, np.inf),
        params={"c": c},
    )


CATALOG: dict[str, Callable[..., Nonlinearity]] = {
    "logistic": _logistic,
    "remark_b": _remark_b,
    "allen_cahn": _allen_cahn,
    "gradient_even": _gradient_even,
    # linear test equations (heat flow and its shifts) for solver verification
    "zero": _zero,
    "linear": _linear,
}


def catalog_get(name: str, **params) -> Nonlinearity:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown nonlinearity {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)


@dataclass(frozen=True)
class SymmetryReport:
    max_x1_violation: float
    max_p1_violation: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.max_x1_violation == 0.0 and self.max_p1_violation == 0.0


def _sample_points(rng, n, dim, u_range, p_range, x_range):
    x = rng.uniform(*x_range, size=(n, dim))
    u = rng.uniform(*u_range, size=n)
    p = rng.uniform(*p_range, size=(n, dim))
    return x, u, p


def check_symmetry_hypotheses(
    f: Nonlinearity,
    n_samples: int = 1000,
    *,
    dim: int = 2,
    u_range=(-0.5, 4.0),
    p_range=(-6.0, 6.0),
    x_range=(-10.0, 10.0),
    seed: int = 0,
) -> SymmetryReport:
    """Sample ``f`` for dependence on ``x1`` and oddness in ``p1``."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    rng = np.random.default_rng(seed)
    x, u, p = _sample_points(rng, n_samples, dim, u_range, p_range, x_range)
    base = f(x, u, p)
    x_moved = x.copy()
    x_moved[:, 0] = rng.uniform(*x_range, size=n_samples)
    p_flip = p.copy()
    p_flip[:, 0] = -p_flip[:, 0]
    return SymmetryReport(
        max_x1_violation=float(np.max(np.abs(f(x_moved, u, p) - base))),
        max_p1_violation=float(np.max(np.abs(f(x, u, p_flip) - base))),
        n_samples=n_samples,
    )


@dataclass(frozen=True)
class LipschitzEstimate:
    estimate: float
    declared: float
    slack: float

    @property
    def within_bound(self) -> bool:
        return self.estimate <= self.declared * (1 + self.slack)


def check_lipschitz(
    f: Nonlinearity,
    n_samples: int = 20000,
    *,
    u_range=(0.0, 2.0),
    p_range=(-5.0, 5.0),
    dim: int = 1,
    slack: float = 1e-6,
    seed: int = 0,
) -> LipschitzEstimate:
    """Largest sampled ``|f(a) - f(b)| / max(|u_a - u_b|, |p_a - p_b|_inf)``.

    Half of the pairs are close together (log-uniform separation), which
    probes the derivative; the rest are independent draws.
    """
    rng = np.random.default_rng(seed)
    x, u, p = _sample_points(rng, n_samples, dim, u_range, p_range, (-1.0, 1.0))
    u2 = rng.uniform(*u_range, size=n_samples)
    p2 = rng.uniform(*p_range, size=(n_samples, dim))
    near = np.arange(n_samples) < n_samples // 2
    delta = 10.0 ** rng.uniform(-6, 0, size=n_samples)
    u2 = np.where(near, np.clip(u + delta * rng.choice([-1, 1], n_samples), *u_range), u2)
    step = delta[:, None] * rng.uniform(-1, 1, size=(n_samples, dim))
    p2 = np.where(near[:, None], np.clip(p + step, *p_range), p2)
    num = np.abs(f(x, u, p) - f(x, u2, p2))
    den = np.maximum(np.abs(u - u2), np.max(np.abs(p - p2), axis=1))
    ok = den > 0
    est = float(np.max(num[ok] / den[ok])) if ok.any() else 0.0
    return LipschitzEstimate(estimate=est, declared=f.lipschitz, slack=slack)


@dataclass(frozen=True)
class Forcing:
    """Time-dependent source ``h(x, t)`` with a sup-norm envelope tending to zero."""

    name: str
    func: Callable[[np.ndarray, float], np.ndarray]
    envelope: Callable[[float], float]
    params: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.func(x, t)

    @property
    def is_zero(self) -> bool:
        return self.name == "none" or self.params.get("amplitude", 1.0) == 0.0


def forcing_get(
    name: str,
    amplitude: float = 0.0,
    decay_rate: float = 1.0,
    *,
    half_extent: float = 1.0,
    center: float | None = None,
    width: float | None = None,
) -> Forcing:
    """Decaying forcing terms.

    ``exp_ramp``: ``amplitude * exp(-decay_rate*t) * x1/half_extent`` (odd in x1).
    ``exp_bump``: ``amplitude * exp(-decay_rate*t)`` times a Gaussian in x1
    centred off the symmetry plane.
    ``none``: identically zero.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    if decay_rate <= 0:
        raise ValueError("decay_rate must be positive")
    params = {"amplitude": amplitude, "decay_rate": decay_rate, "half_extent": half_extent}
    envelope = lambda t: amplitude * float(np.exp(-decay_rate * t))  # noqa: E731

    if name == "none":
        return Forcing("none", lambda x, t: np.zeros(len(x)), lambda t: 0.0, params)
    if name == "exp_ramp":
        def ramp(x, t):
            return amplitude * np.exp(-decay_rate * t) * (x[:, 0] / half_extent)

        return Forcing(name, ramp, envelope, params)
    if name == "exp_bump":
        c = 0.5 * half_extent if center is None else center
        w = 0.15 * half_extent if width is None else width
        params.update(center=c, width=w)

        def bump(x, t):
            return amplitude * np.exp(-decay_rate * t) * np.exp(-((x[:, 0] - c) ** 2) / (2 * w**2))

        return Forcing(name, bump, envelope, params)
    raise KeyError(f"unknown forcing {name!r}; choose from ['exp_bump', 'exp_ramp', 'none']")
