import numpy as np
import pytest

from spatial_ppm.models.geometry import Window
from spatial_ppm.models.raster import GridSpec, build_grid


@pytest.fixture
def unit_square():
    return Window.rectangle(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def l_window():
    # covers the lower-left, lower-right and upper-left quadrants of [0, 2]^2
    return Window.from_rings([[(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]])


@pytest.fixture
def holed_window():
    return Window.from_rings([
        [(0, 0), (3, 0), (3, 3), (0, 3)],
        [(1, 1), (2, 1), (2, 2), (1, 2)],
    ])


@pytest.fixture
def irregular_window():
    """Irregular hexagonal window in kilometers"""
    return Window.from_rings([[(0, 0), (100, 20), (120, 80), (70, 120), (20, 100), (-10, 50)]])


@pytest.fixture
def unit_grid(unit_square):
    return build_grid(GridSpec(unit_square, 64, 64))


@pytest.fixture
def ramp(unit_grid):
    """Covariate equal to the x coordinate of each cell center"""
    xs, _ = unit_grid.cell_centers()
    return unit_grid.with_values(np.tile(xs, (unit_grid.ny, 1)))
