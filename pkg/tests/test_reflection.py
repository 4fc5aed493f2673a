import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from parasym.domain import Field, build_interval, build_symmetric_2d
from parasym.reflection import (
    axis_slope_stats,
    capital_lambda,
    capital_lambda_bruteforce,
    monotone_defect,
    symmetry_defect,
    v_lambda,
)

D1 = build_interval(1.0, 32)
D2 = build_symmetric_2d([5, 7, 7, 3, 7], h=0.5)


def test_even_field_zero_plane_difference_vanishes():
    z = D1.field(lambda x: np.cos(np.pi * x / 2))
    assert np.max(np.abs(v_lambda(z, 0.0).values)) <= 1e-15


def test_one_sided_support():
    d = build_interval(2.0, 40)
    z = d.field(lambda x: np.where(x < -1.0, 1.0, 0.0))
    cap = v_lambda(z, 1.0)
    x = d.coordinates()[cap.indices, 0]
    # reflections of the cap land in x1 > 0 where z = 0, so V = -z = 0 there
    assert np.all(cap.values == -z.values[cap.indices])
    assert np.all(x > 1.0)


def test_even_decreasing_gives_zero():
    z = D2.field(lambda x1, x2: 4 - x1**2)
    assert capital_lambda(z).k == 0


def test_tent_against_dense_oracle():
    d = build_interval(1.0, 200)
    a = 0.25
    z = d.field(lambda x: np.maximum(0.0, 1 - np.abs(x - a)))
    res = capital_lambda(z)
    assert abs(res.value - a) <= d.h / 2 + 1e-12
    assert res == capital_lambda_bruteforce(z)


def test_xi_lambda_and_witness():
    d = build_interval(3 * np.pi, 1536)
    res = capital_lambda(d.field(lambda x: 1 + np.cos(x)))
    assert res.k == 1024
    assert res.witness_mu == pytest.approx(res.value - d.h / 2)
    assert res.witness_value < 0


def test_zero_field():
    assert capital_lambda(D1.zeros()).k == 0
    assert capital_lambda_bruteforce(D1.zeros()).k == 0


def test_bruteforce_size_guard():
    with pytest.raises(ValueError):
        capital_lambda_bruteforce(build_interval(1.0, 20_002).zeros())


def test_symmetry_defect_examples():
    d = build_interval(1.0, 16)
    assert symmetry_defect(d.field(lambda x: 1 - x**2)) == 0.0
    xi = build_interval(3 * np.pi, 768).field(lambda x: 1 + np.cos(x))
    assert symmetry_defect(xi) <= 1e-14
    assert symmetry_defect(d.field(lambda x: x)) == pytest.approx(2 * d.coordinates()[:, 0].max())


def test_monotone_defect_examples():
    d = build_interval(3 * np.pi, 768)
    xi = d.field(lambda x: 1 + np.cos(x))
    assert monotone_defect(d.field(lambda x: 10 - x**2), 0.0) == 0.0
    assert monotone_defect(xi, 0.0) > 0.01
    assert monotone_defect(xi, 2 * np.pi) == 0.0


def test_axis_slope_stats_strictness_reported():
    stats = axis_slope_stats(D1.field(lambda x: 1 - x**2))
    assert stats["strict"] and stats["max_slope"] < 0


fields_1d = arrays(np.float64, D1.n_interior, elements=st.floats(-5, 5, allow_nan=False))
fields_2d = arrays(np.float64, D2.n_interior, elements=st.floats(-5, 5, allow_nan=False))


@given(fields_1d)
def test_oracle_equivalence_1d(vals):
    z = Field(D1, vals)
    assert capital_lambda(z) == capital_lambda_bruteforce(z)


@given(fields_2d)
def test_oracle_equivalence_2d(vals):
    z = Field(D2, vals)
    assert capital_lambda(z) == capital_lambda_bruteforce(z)


@given(fields_2d, st.sampled_from([1e-8, 0.3, 1.0, 7.0, 2.0**40]))
def test_scale_invariance(vals, c):
    z = Field(D2, vals)
    assert capital_lambda(z * c).k == capital_lambda(z).k


@given(fields_1d, st.integers(0, 30))
def test_mirrored_pairs_antisymmetric(vals, k):
    z = Field(D1, vals)
    lam = D1.lambda_value(k)
    cap = v_lambda(z, lam)
    src, dst = D1.mirror_indices(k)
    pair = dst >= 0
    assert np.allclose(cap.values[pair], z.values[dst[pair]] - z.values[src[pair]])
    back = np.append(z.values, 0.0)[src[pair]] - z.values[dst[pair]]
    assert np.all(cap.values[pair] + back == 0)


@given(fields_1d)
def test_monotone_past_lambda(vals):
    z = Field(D1, vals)
    res = capital_lambda(z)
    assert monotone_defect(z, res.value) <= res.tol_abs


@given(arrays(np.float64, 16, elements=st.floats(0, 5)))
def test_even_nonincreasing_gives_zero(steps):
    d = build_interval(1.0, 34)
    right = np.cumsum(steps)[::-1]  # nonincreasing away from the axis
    vals = np.concatenate([right[::-1], [right[0]], right])
    assert vals.size == d.n_interior
    assert capital_lambda(Field(d, vals)).k == 0
