import numpy as np
import pytest

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import PlanarPoint, contains_many
from spatial_ppm.models.raster import (
    GridSpec,
    PixelImage,
    build_grid,
    integrate,
    lookup,
    lookup_many,
    quantile_threshold,
)


def test_unit_square_grid(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    assert grid.count == 4
    assert grid.dx == pytest.approx(0.5)
    assert grid.dy == pytest.approx(0.5)


def test_l_window_grid(l_window):
    grid = build_grid(GridSpec(l_window, 2, 2))
    assert grid.count == 3
    assert not grid.mask[1, 1]


def test_irregular_grid_masked_fraction(irregular_window):
    grid = build_grid(GridSpec(irregular_window, 128, 128))
    xmin, xmax, ymin, ymax = irregular_window.bbox
    fine = np.stack(np.meshgrid(np.linspace(xmin, xmax, 800), np.linspace(ymin, ymax, 800)), axis=-1).reshape(-1, 2)
    fraction = contains_many(irregular_window, fine).mean()
    assert grid.count == pytest.approx(fraction * 128 * 128, rel=0.02)


def test_integrate_constants(unit_square, irregular_window):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    assert integrate(grid.filled(1.0)) == pytest.approx(1.0)
    assert integrate(grid) == 0.0
    big = build_grid(GridSpec(irregular_window, 50, 40))
    assert integrate(big.filled(2.5)) == pytest.approx(2.5 * big.count * big.dx * big.dy)


def test_expected_count_of_one_cell():
    cell = PixelImage(0.0, 0.0, 7.49, 7.61, np.ones((1, 1), dtype=bool), np.full((1, 1), 0.00255))
    assert integrate(cell) == pytest.approx(0.1453, abs=5e-4)


def test_lookup_cell_center_and_outside(unit_square):
    grid = build_grid(GridSpec(unit_square, 4, 4))
    img = grid.with_values(np.arange(16, dtype=float).reshape(4, 4))
    assert lookup(img, PlanarPoint(0.125, 0.125)) == 0.0
    assert lookup(img, PlanarPoint(0.875, 0.625)) == 11.0
    assert lookup(img, PlanarPoint(1.5, 0.5)) is None
    # the upper and right edges belong to the last cell
    assert lookup(img, PlanarPoint(1.0, 1.0)) == 15.0


def test_lookup_in_hole_is_missing(holed_window):
    grid = build_grid(GridSpec(holed_window, 3, 3))
    img = grid.filled(1.0)
    assert lookup(img, PlanarPoint(1.5, 1.5)) is None
    assert lookup(img, PlanarPoint(0.5, 0.5)) == 1.0


def test_lookup_many_flags(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    values = np.array([[1.0, np.nan], [3.0, 4.0]])
    img = grid.with_values(values)
    found, defined = lookup_many(img, [[0.25, 0.25], [0.75, 0.25], [2.0, 2.0]])
    np.testing.assert_array_equal(defined, [True, False, False])
    assert found[0] == 1.0
    assert np.isnan(found[1]) and np.isnan(found[2])


def test_quantile_threshold(unit_square):
    grid = build_grid(GridSpec(unit_square, 10, 10))
    img = grid.with_values(np.arange(1, 101, dtype=float).reshape(10, 10))
    assert quantile_threshold(img, 0.95) == 95.0
    assert quantile_threshold(img, 0.0) == 1.0
    assert quantile_threshold(img, 1.0) == 100.0
    with pytest.raises(InputError):
        quantile_threshold(img, 1.5)


def test_quantile_threshold_empty(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    with pytest.raises(InputError):
        quantile_threshold(grid.with_values(np.full((2, 2), np.nan)), 0.5)


def test_image_arithmetic(unit_square):
    grid = build_grid(GridSpec(unit_square, 3, 3))
    a = grid.filled(2.0)
    b = grid.filled(0.5)
    assert integrate(a * b) == pytest.approx(1.0)
    assert integrate(a - b) == pytest.approx(1.5)
    assert integrate(a.map(np.log)) == pytest.approx(np.log(2.0))
    other = build_grid(GridSpec(unit_square, 4, 4)).filled(1.0)
    with pytest.raises(InputError):
        a + other


def test_values_are_read_only(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    with pytest.raises(ValueError):
        grid.values[0, 0] = 1.0


def test_grid_spec_validation(unit_square):
    with pytest.raises(InputError):
        GridSpec(unit_square, 0, 3)
