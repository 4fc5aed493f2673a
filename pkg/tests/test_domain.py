import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from parasym.domain import (
    Domain,
    DomainError,
    Field,
    build_interval,
    build_symmetric_2d,
    omega_lambda_components,
    reflect,
    rle_decode,
    rle_encode,
)


def test_interval_3pi_spacing():
    d = build_interval(3 * np.pi, 1024)
    assert d.half_extent == 3 * np.pi
    assert d.h == pytest.approx(6 * np.pi / 1024, rel=1e-15)
    assert d.n_interior == 1023


def test_smallest_interval():
    d = build_interval(1.0, 8)
    x = d.coordinates()[:, 0]
    assert d.n_interior == 7
    assert np.allclose(x, np.arange(-3, 4) / 4)


@pytest.mark.parametrize("args", [(1.0, 9), (1.0, 6), (-1.0, 8)])
def test_interval_rejects_bad_input(args):
    with pytest.raises(DomainError):
        build_interval(*args)


def test_rectangle():
    d = build_symmetric_2d([3, 3, 3, 3])
    assert d.half_extent == 3
    assert d.shape == (7, 5)
    assert d.n_interior == 5 * 3


def test_row_with_gap_rejected():
    with pytest.raises(DomainError):
        build_symmetric_2d([3, [[-3, -1], [1, 3]], 3])


def test_asymmetric_row_rejected():
    with pytest.raises(DomainError):
        build_symmetric_2d([3, [-2, 3], 3])


def _flood_fill_counts(domain, k):
    cap = domain.cap_mask(k) & domain.mask
    structure = ndimage.generate_binary_structure(domain.dim, 1)
    return ndimage.label(cap, structure=structure)[1]


def test_dumbbell_component_counts_match_flood_fill():
    # wide rows at the bottom and top, a narrow neck in between
    d = build_symmetric_2d([8, 8, 2, 2, 8, 8])
    counts = [len(omega_lambda_components(d, d.lambda_value(k))) for k in range(d.k_max)]
    oracle = [_flood_fill_counts(d, k) for k in range(d.k_max)]
    assert counts == oracle
    assert max(counts) == 2


def test_reflect_examples():
    d = build_interval(1.0, 8)
    image, inside = reflect(d, 0.125, (5,))  # x1 = 1/4
    assert d.x1[image[0]] == pytest.approx(0.0)
    assert inside
    image, inside = reflect(d, 0.0, (6,))
    assert d.x1[image[0]] == pytest.approx(-d.x1[6])


def test_reflect_half_node_plane():
    d = build_interval(1.0, 16)
    i = int(np.argmin(np.abs(d.x1 - 0.375)))
    image, inside = reflect(d, 0.125, (i,))
    assert d.x1[image[0]] == pytest.approx(-0.125)
    assert inside


def test_omega_at_top_is_empty():
    d = build_interval(1.0, 8)
    assert omega_lambda_components(d, d.half_extent) == []
    assert omega_lambda_components(d, d.half_extent - d.h / 2) == []


def test_off_grid_lambda_rejected():
    d = build_interval(1.0, 8)
    with pytest.raises(ValueError):
        reflect(d, 0.1, (3,))


domains = st.sampled_from([
    build_interval(1.0, 8),
    build_interval(2.5, 40),
    build_symmetric_2d([4, 4, 4]),
    build_symmetric_2d([6, 2, 6, 6]),
    build_symmetric_2d([1, 3, 5, 3, 1], h=0.5),
])


@given(domains, st.data())
def test_reflection_is_involution(d, data):
    k = data.draw(st.integers(0, d.k_max))
    multi = d.interior_multi_index()
    j = data.draw(st.integers(0, d.n_interior - 1))
    node = tuple(int(m[j]) for m in multi)
    lam = d.lambda_value(k)
    once, _ = reflect(d, lam, node)
    twice, _ = reflect(d, lam, once)
    assert twice == node


@given(domains)
def test_zero_plane_preserves_mask(d):
    assert np.array_equal(d.mask, d.mask[::-1])


@given(domains, st.data())
def test_components_are_nested(d, data):
    k_hi = data.draw(st.integers(1, max(1, d.k_max - 1)))
    k_lo = data.draw(st.integers(0, k_hi))
    big = omega_lambda_components(d, d.lambda_value(k_lo))
    for comp in omega_lambda_components(d, d.lambda_value(k_hi)):
        hosts = [c for c in big if np.isin(comp, c).all()]
        assert len(hosts) == 1


def test_1d_components_single_until_top():
    d = build_interval(2.0, 32)
    counts = [len(omega_lambda_components(d, d.lambda_value(k))) for k in range(d.k_max)]
    assert set(counts[: d.k_max - 2]) == {1}
    assert counts[-1] == 0


@given(domains)
def test_serialization_round_trip(d):
    back = Domain.from_text(d.to_text())
    assert back.same_as(d)
    assert np.array_equal(back.x1, d.x1)


@given(st.lists(st.booleans(), min_size=1, max_size=60))
def test_rle_round_trip(flags):
    arr = np.array(flags)
    assert np.array_equal(rle_decode(rle_encode(arr), arr.size), arr)


def test_field_validation():
    d = build_interval(1.0, 8)
    with pytest.raises(ValueError):
        Field(d, np.zeros(3))
    with pytest.raises(ValueError):
        Field(d, np.full(7, np.nan))
    z = d.field(lambda x: 1 - x**2)
    assert (z * 2).sup_norm() == pytest.approx(2 * z.sup_norm())
