"""
Pixel images: rectangular grids masked to a window

Cell (row j, column i) has its center at (x0 + (i + 0.5) dx, y0 + (j + 0.5) dy); row 0 is
the southernmost row. Values outside the mask, and masked cells without an estimate,
hold NaN in the value array; the public lookup API reports them as None.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import PlanarPoint, Window, contains_many

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Analysis grid request: cell counts over the bounding box of a window"""
    window: Window
    nx: int = 128
    ny: int = 128

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise InputError(f"Grid needs at least one cell per axis, got {self.nx}x{self.ny}")


@dataclass(frozen=True, eq=False)
class PixelImage:
    """
    Rectangular grid of cells masked to a window, one value per cell

    Parameters
    ----------
    x0, y0 : float
        Lower-left corner of the grid in kilometers
    dx, dy : float
        Cell sizes in kilometers
    mask : numpy.ndarray
        Boolean array of shape (ny, nx), True for cells inside the window
    values : numpy.ndarray
        Float array of shape (ny, nx); NaN wherever no value is defined
    window : Window, optional
        Window the mask was built from, when known
    """
    x0: float
    y0: float
    dx: float
    dy: float
    mask: np.ndarray
    values: np.ndarray
    window: Optional[Window] = field(default=None, repr=False)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        values = np.array(self.values, dtype=float)
        if mask.ndim != 2 or mask.shape != values.shape:
            raise InputError(f"Mask {mask.shape} and values {values.shape} must be matching 2-D arrays")
        if mask.size < 1 or not (self.dx > 0 and self.dy > 0):
            raise InputError("Pixel image needs at least one cell and positive cell sizes")
        values[~mask] = np.nan
        mask.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, 'mask', mask)
        object.__setattr__(self, 'values', values)

    @property
    def nx(self):
        return self.mask.shape[1]

    @property
    def ny(self):
        return self.mask.shape[0]

    @property
    def origin(self):
        return PlanarPoint(self.x0, self.y0)

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def count(self):
        """Number of cells inside the window"""
        return int(self.mask.sum())

    @property
    def defined(self):
        """Boolean array of masked cells holding a finite value"""
        return self.mask & np.isfinite(self.values)

    @property
    def defined_count(self):
        return int(self.defined.sum())

    @property
    def bbox(self):
        return (self.x0, self.x0 + self.nx * self.dx, self.y0, self.y0 + self.ny * self.dy)

    def cell_centers(self):
        """
        Cell center coordinates along each axis

        Returns
        -------
        tuple of numpy.ndarray
            x centers of length nx and y centers of length ny
        """
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.dy
        return xs, ys

    def masked_centers(self):
        """Centers of the masked cells as an (m, 2) array in row-major order"""
        xs, ys = self.cell_centers()
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx[self.mask], gy[self.mask]])

    def same_grid(self, other):
        return (
            self.mask.shape == other.mask.shape
            and math.isclose(self.x0, other.x0, abs_tol=1e-9)
            and math.isclose(self.y0, other.y0, abs_tol=1e-9)
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
            and math.isclose(self.dy, other.dy, rel_tol=1e-12)
            and np.array_equal(self.mask, other.mask)
        )

    def with_values(self, values):
        """New image on the same grid and mask holding the given values"""
        return PixelImage(self.x0, self.y0, self.dx, self.dy, self.mask, values, self.window)

    def filled(self, value):
        values = np.full(self.mask.shape, float(value))
        return self.with_values(values)

    def map(self, func):
        """Apply an element-wise numpy function to the defined values"""
        with np.errstate(invalid='ignore', divide='ignore'):
            return self.with_values(func(self.values))

    def _binary(self, other, op):
        if isinstance(other, PixelImage):
            if not self.same_grid(other):
                raise InputError("Pixel images must share the same grid")
            other = other.values
        with np.errstate(invalid='ignore', divide='ignore'):
            return self.with_values(op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.true_divide)

    def cell_index(self, xy):
        """
        Column and row of the cell containing each point

        Points on the upper or right edge of the grid belong to the last cell.

        Returns
        -------
        tuple of numpy.ndarray
            Column index, row index and a boolean array flagging points inside the grid
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        fx = (xy[:, 0] - self.x0) / self.dx
        fy = (xy[:, 1] - self.y0) / self.dy
        inside = (fx >= 0) & (fx <= self.nx) & (fy >= 0) & (fy <= self.ny)
        col = np.clip(np.floor(np.where(inside, fx, 0)).astype(int), 0, self.nx - 1)
        row = np.clip(np.floor(np.where(inside, fy, 0)).astype(int), 0, self.ny - 1)
        return col, row, inside


def build_grid(spec):
    """
    Build the analysis grid over the bounding box of a window

    Parameters
    ----------
    spec : GridSpec
        Window and cell counts

    Returns
    -------
    PixelImage
        Grid whose mask holds the cells with center inside the window, values 0 there
    """
    xmin, xmax, ymin, ymax = spec.window.bbox
    nx = int(spec.nx)
    ny = int(spec.ny)
    dx = (xmax - xmin) / nx
    dy = (ymax - ymin) / ny
    xs = xmin + (np.arange(nx) + 0.5) * dx
    ys = ymin + (np.arange(ny) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys)
    mask = contains_many(spec.window, np.column_stack([gx.ravel(), gy.ravel()])).reshape(ny, nx)
    values = np.where(mask, 0.0, np.nan)
    img = PixelImage(xmin, ymin, dx, dy, mask, values, spec.window)
    _logger.debug("Built %dx%d grid with %d masked cells (%.4g x %.4g km)", nx, ny, img.count, dx, dy)
    return img


def integrate(img):
    """
    Pixel-area-weighted sum of the defined values

    Parameters
    ----------
    img : PixelImage

    Returns
    -------
    float
        dx * dy * sum of the values over defined masked cells
    """
    return float(img.dx * img.dy * np.sum(img.values[img.defined]))


def lookup_many(img, xy):
    """
    Value of the cell containing each point

    Returns
    -------
    tuple of numpy.ndarray
        Values (NaN where missing) and a boolean array flagging defined lookups
    """
    col, row, inside = img.cell_index(xy)
    values = img.values[row, col]
    defined = inside & img.mask[row, col] & np.isfinite(values)
    return np.where(defined, values, np.nan), defined


def lookup(img, p):
    """
    Value of the cell containing a point

    Parameters
    ----------
    img : PixelImage
    p : PlanarPoint

    Returns
    -------
    float or None
        None when the point is outside the grid or its cell is unmasked or undefined
    """
    values, defined = lookup_many(img, [[p.x, p.y]])
    return float(values[0]) if defined[0] else None


def quantile_threshold(img, q):
    """
    Lower empirical quantile of the defined cell values

    Parameters
    ----------
    img : PixelImage
    q : float
        Fraction in [0, 1]

    Returns
    -------
    float
        Smallest cell value v such that a fraction q of cells have value <= v
    """
    if not 0 <= q <= 1:
        raise InputError(f"Quantile fraction must lie in [0, 1], got {q}")
    values = img.values[img.defined]
    if values.size == 0:
        raise InputError("Cannot take a quantile of an image without defined cells")
    return float(np.quantile(values, q, method='inverted_cdf'))
