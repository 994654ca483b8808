import math

import numpy as np
import pytest

from multdirichlet.cartan import (CartanVector, ConeQuery, Dims, SigmaSlice, chart_density, gamma_chart,
                                  gamma_points, in_cone, lipschitz_bounds, sample_M_sigma, separation,
                                  separation_bar, tM_in_cone)
from multdirichlet.errors import DomainError

D21, D12, D22 = Dims(2, 1), Dims(1, 2), Dims(2, 2)


def test_in_cone_interior_point():
    assert in_cone((0.5, 0.5, -1), ConeQuery(D21, 0.0, 1.0))


def test_in_cone_rejects_boundary():
    assert not in_cone((1, 0, -1), ConeQuery(D21, 0.0, 1.0))


def test_in_cone_with_positive_radius():
    assert in_cone((2, -0.5, -1.5), ConeQuery(D21, 1.0, 1.5))


def test_in_cone_dimension_mismatch():
    with pytest.raises(DomainError):
        in_cone((1, -1), ConeQuery(D21, 0.0, 1.0))


def test_cartan_vector_requires_zero_sum():
    with pytest.raises(DomainError):
        CartanVector(D21, (1.0, 1.0, -1.0))


@pytest.mark.parametrize("dims,sigma,s,expected", [
    (D21, 0.25, (0.5,), (0.5, 0.5, -1)),
    (D22, 0.2, (0.3, 0.3), (0.3, 0.7, -0.3, -0.7)),
    (D21, 0.25, (0.25,), (0.25, 0.75, -1)),
])
def test_gamma_chart_values(dims, sigma, s, expected):
    a = gamma_chart(SigmaSlice(dims, sigma), s)
    assert np.allclose(a.entries, expected, atol=1e-15)


def test_gamma_chart_outside_domain():
    with pytest.raises(DomainError):
        gamma_chart(SigmaSlice(D21, 0.25), (0.1,))


def test_sigma_bounds():
    with pytest.raises(DomainError):
        SigmaSlice(D22, 0.5)


@pytest.mark.parametrize("dims,expected", [(D21, math.sqrt(2)), (D12, math.sqrt(2)), (D22, 2.0)])
def test_chart_density(dims, expected):
    assert chart_density(SigmaSlice(dims, 0.1)) == pytest.approx(expected, rel=1e-14)


def test_sample_M_sigma_structure_and_determinism():
    sl = SigmaSlice(D21, 0.25)
    a = sample_M_sigma(sl, 42)
    assert a == sample_M_sigma(sl, 42)
    assert a.entries[2] == -1.0


def test_sample_M_sigma_mean():
    sl = SigmaSlice(D21, 0.25)
    vals = [sample_M_sigma(sl, [7, i]).entries[0] for i in range(10_000)]
    assert abs(np.mean(vals) - 0.5) < 0.02


def test_separation_examples():
    pts = [CartanVector(D21, (1, 0, -1)), CartanVector(D21, (2, 0, -2))]
    assert separation(pts) == 1.0
    assert separation_bar(pts) == 0.0


def test_separation_needs_two_points():
    with pytest.raises(DomainError):
        separation([CartanVector(D21, (1, 0, -1))])


def test_tM_in_cone():
    sl = SigmaSlice(D21, 0.3)
    assert tM_in_cone(sl, 10, 1)
    assert not tM_in_cone(sl, 3, 1)


def test_lipschitz_scalar_chart_is_exact():
    assert lipschitz_bounds(SigmaSlice(D21, 0.1)) == (1.0, 1.0)


def test_lipschitz_upper_bound_holds_on_random_pairs():
    sl = SigmaSlice(D22, 0.1)
    lo, hi = lipschitz_bounds(sl)
    assert lo >= 1 and hi <= 2
    rng = np.random.default_rng(3)
    S = rng.uniform(0.1, 0.45, size=(10_000, 2))
    S2 = rng.uniform(0.1, 0.45, size=(10_000, 2))
    ratio = (np.abs(gamma_points(D22, S) - gamma_points(D22, S2)).max(axis=1)
             / np.abs(S - S2).max(axis=1))
    assert ratio.max() <= hi + 1e-12
    assert ratio.min() >= lo - 1e-12
