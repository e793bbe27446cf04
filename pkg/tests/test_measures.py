""" Tests for the discrete measures"""
import math

import numpy as np
import pytest

from mkdistance.exceptions import AllZeroImage
from mkdistance.exceptions import InvalidMeasure
from mkdistance.exceptions import UnbalancedProblem
from mkdistance.exceptions import ZeroTotalMass
from mkdistance.measures import BalancedPair
from mkdistance.measures import DiscreteMeasure
from mkdistance.measures import GridPoint
from mkdistance.measures import make_balanced_pair
from mkdistance.measures import measure_from_image
from mkdistance.measures import normalize
from mkdistance.measures import normalize_image
from mkdistance.transport import solve_transport


def test_measure_from_image_places_pixels_at_col_row():
    m = measure_from_image(np.array([[0, 1], [2, 0]]))
    assert m.points == (GridPoint(1, 0), GridPoint(0, 1))
    np.testing.assert_array_equal(m.masses, [1, 2])
    assert m.total_mass == 3


def test_measure_from_uniform_image():
    m = measure_from_image(np.ones((28, 28)))
    assert len(m) == 784
    assert np.all(m.masses == 1)
    assert m.total_mass == 784


def test_measure_from_image_drops_pixels_at_or_below_min_mass():
    m = measure_from_image(np.array([[0.1, 0.5], [0.2, 0.0]]), min_mass=0.2)
    assert m.points == (GridPoint(1, 0),)


def test_measure_from_image_total_matches_compensated_sum():
    rng = np.random.default_rng(3)
    img = rng.random((28, 28)) * (rng.random((28, 28)) > 0.7)
    m = measure_from_image(img)
    assert len(m) == np.count_nonzero(img)
    expected = math.fsum(img[img > 0])
    assert abs(m.total_mass - expected) <= 1e-12 * expected


def test_measure_from_blank_image():
    with pytest.raises(AllZeroImage):
        measure_from_image(np.zeros((4, 4)))


@pytest.mark.parametrize("coords,masses", [
    ([], []),
    ([[0, 0], [1, 1]], [1.0]),
    ([[0, 0]], [-1.0]),
    ([[0, 0], [0, 0]], [1.0, 1.0]),
    ([[np.nan, 0]], [1.0]),
])
def test_invalid_measures(coords, masses):
    with pytest.raises(InvalidMeasure):
        DiscreteMeasure(coords, masses)


def test_grid_point_must_be_finite():
    with pytest.raises(InvalidMeasure):
        GridPoint(float('inf'), 0.0)


def test_normalize():
    m = normalize(DiscreteMeasure([[0, 0], [1, 0]], [2, 3]))
    np.testing.assert_allclose(m.masses, [0.4, 0.6], rtol=0, atol=1e-15)


def test_normalize_is_idempotent():
    rng = np.random.default_rng(7)
    once = normalize(DiscreteMeasure(rng.permutation(100)[:10].reshape(5, 2), rng.random(5)))
    twice = normalize(once)
    np.testing.assert_allclose(twice.masses, once.masses, rtol=0, atol=1e-12)


def test_normalize_random_measure_has_unit_mass():
    rng = np.random.default_rng(11)
    cells = rng.choice(100, size=10, replace=False)
    m = normalize(DiscreteMeasure(np.column_stack([cells % 10, cells // 10]), rng.random(10) * 50))
    assert abs(math.fsum(m.masses) - 1) <= 1e-12


def test_normalize_zero_mass():
    with pytest.raises(ZeroTotalMass):
        normalize(DiscreteMeasure([[0, 0]], [0.0]))


@pytest.mark.parametrize("a_masses,b_masses", [([1, 2], [3]), ([5], [3, 4])])
def test_make_balanced_pair(a_masses, b_masses):
    a = DiscreteMeasure([[i, 0] for i in range(len(a_masses))], a_masses)
    b = DiscreteMeasure([[0, i] for i in range(len(b_masses))], b_masses)
    pair = make_balanced_pair(a, b)
    assert abs(pair.source.total_mass - 1) <= 1e-12
    assert abs(pair.target.total_mass - 1) <= 1e-12


def test_make_balanced_pair_zero_mass():
    with pytest.raises(ZeroTotalMass):
        make_balanced_pair(DiscreteMeasure([[0, 0]], [0.0]), DiscreteMeasure([[0, 0]], [1.0]))


def test_balanced_pair_rejects_unequal_totals():
    with pytest.raises(UnbalancedProblem):
        BalancedPair(DiscreteMeasure([[0, 0]], [5.0]), DiscreteMeasure([[0, 0]], [7.0]))


def test_normalize_image():
    np.testing.assert_allclose(normalize_image([[1, 3]]), [[0.25, 0.75]])
    with pytest.raises(ZeroTotalMass):
        normalize_image(np.zeros((2, 2)))


def test_dropping_zero_mass_pixels_keeps_the_transport_cost():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.random((3, 3)) * (rng.random((3, 3)) > 0.4)
        b = rng.random((3, 3)) * (rng.random((3, 3)) > 0.4)
        a[0, 0] += 0.1
        b[2, 2] += 0.1
        sparse = make_balanced_pair(measure_from_image(a), measure_from_image(b))
        dense = make_balanced_pair(measure_from_image(a, min_mass=-1), measure_from_image(b, min_mass=-1))
        assert len(dense.source) == 9
        assert abs(solve_transport(sparse).objective - solve_transport(dense).objective) <= 1e-9
