import math

import numpy as np
import pytest

from src.errors import ShapeMismatchError, ValidationFailure
from src.measure import (
    DensityMeasure,
    Factor,
    build_grid,
    integrate,
    region_mask,
    restrict_measure,
    vanishing_mask,
)


def test_circle_weights_sum_to_length():
    space = build_grid([Factor("circle", 2 * math.pi)], 1000)
    assert space.size == 1000
    assert space.periodic == (True,)
    assert space.total_measure == pytest.approx(2 * math.pi)


def test_interval_cell_centers():
    space = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 4)
    np.testing.assert_allclose(space.coordinate(0), [-0.75, -0.25, 0.25, 0.75])
    assert space.periodic == (False,)


def test_torus_grid_is_centred_and_c_ordered():
    space = build_grid([Factor("torus", 1.0)] * 2, (2, 3))
    np.testing.assert_allclose(space.axis(0), [-0.25, 0.25])
    assert space.points.shape == (6, 2)
    assert space.total_measure == pytest.approx(1.0)
    # the last axis runs fastest
    np.testing.assert_allclose(space.points[1], [-0.25, space.axis(1)[1]])
    assert space.grid_index(4) == (1, 1)


@pytest.mark.parametrize("make", [
    lambda: Factor("sphere"),
    lambda: Factor("interval", lower=1.0, upper=1.0),
    lambda: Factor("circle", 0.0),
])
def test_invalid_factor(make):
    with pytest.raises(ValidationFailure):
        make()


def test_resolution_needs_one_entry_per_factor():
    with pytest.raises(ShapeMismatchError):
        build_grid([Factor("circle")], (3, 4))


def test_density_rescales_weights():
    space = build_grid([Factor("interval")], 4, density=[1.0, 2.0, 3.0, 4.0])
    assert space.total_measure == pytest.approx(2.5)


def test_zero_density_is_rejected():
    # an open set of measure zero is not allowed
    with pytest.raises(ValidationFailure):
        build_grid([Factor("interval")], 4, density=[1.0, 0.0, 1.0, 1.0])


def test_region_mask_wraps_on_circle():
    space = build_grid([Factor("circle", 1.0)], 10)
    mask = region_mask(space, [0.9], [1.1])
    assert np.flatnonzero(mask).tolist() == [0, 9]


def test_region_mask_rounds_outward_on_interval():
    space = build_grid([Factor("interval")], 10)
    assert np.flatnonzero(region_mask(space, [0.32], [0.48])).tolist() == [3, 4]
    with pytest.raises(ValidationFailure):
        region_mask(space, [0.5], [0.4])


def test_restricted_measure_of_indicator():
    space = build_grid([Factor("interval")], 10)
    nu = restrict_measure(space, region_mask(space, [0.32], [0.48]))
    assert nu.total == pytest.approx(0.2)
    with pytest.raises(ValidationFailure):
        restrict_measure(space, -np.ones(10))


def test_integrate():
    space = build_grid([Factor("circle", 2.0)], 8)
    assert integrate(space, None, np.ones(8)).real == pytest.approx(2.0)
    half = DensityMeasure(space, np.full(8, 0.5))
    assert integrate(space, half, np.ones(8)).real == pytest.approx(1.0)
    with pytest.raises(ValidationFailure):
        integrate(space, None, np.r_[np.ones(7), np.nan])


def test_vanishing_mask_sees_zero_between_samples():
    space = build_grid([Factor("interval")], 10)
    values = np.abs(space.coordinate(0) - 0.5)
    assert np.flatnonzero(vanishing_mask(space, values, 0.0)).tolist() == [4, 5]


def test_vanishing_mask_ignores_positive_minimum():
    space = build_grid([Factor("interval")], 10)
    assert not vanishing_mask(space, 1.0 + space.coordinate(0), 0.0).any()


def test_vanishing_mask_ignores_coarse_invertible_field():
    # 2 + cos x at four samples: the low cells sit a full jump above zero
    circle = build_grid([Factor("circle", 2 * math.pi)], 4)
    values = 2.0 + np.cos(circle.coordinate(0))
    assert not vanishing_mask(circle, values, 0.0).any()
    assert vanishing_mask(circle, values, 0.0, relative=1.0).any()


def test_vanishing_mask_needs_small_values_relative_to_the_supremum():
    space = build_grid([Factor("interval")], 10)
    values = np.abs(space.coordinate(0) - 0.5)
    assert not vanishing_mask(space, values, 0.0, relative=0.05).any()


def test_vanishing_mask_floor_and_shape():
    space = build_grid([Factor("interval")], 10)
    assert vanishing_mask(space, np.full(10, 1e-12), 1e-10).all()
    with pytest.raises(ShapeMismatchError):
        vanishing_mask(space, np.ones(9), 0.0)
