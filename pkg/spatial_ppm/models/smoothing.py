"""
Gaussian kernel smoothing of point patterns

Kernel sums over the analysis grid use the separability of the axis-aligned Gaussian:
the kernel between point i and cell (row j, column c) factors as gx[i, c] * gy[i, j], so
every grid-wide sum reduces to a matrix product.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from spatial_ppm.exceptions import EdgeCorrectionError, InputError, NumericalError
from spatial_ppm.models.geometry import contains

_logger = logging.getLogger(__name__)

# Kernel factors are set to zero beyond this many standard deviations along an axis
TRUNCATION = 8.0

# Kernel mass per square kilometer below which the smoother reports no estimate
NW_UNDERFLOW = 1e-12


@dataclass(frozen=True)
class Bandwidth:
    """Standard deviations of the Gaussian kernel along x and y, in kilometers"""
    sigma_x: float
    sigma_y: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0) or not (math.isfinite(self.sigma_x) and math.isfinite(self.sigma_y)):
            raise InputError(f"Bandwidth must be positive and finite, got ({self.sigma_x}, {self.sigma_y})")

    @classmethod
    def isotropic(cls, sigma):
        return cls(float(sigma), float(sigma))

    def to_dict(self):
        return {'sigma_x': self.sigma_x, 'sigma_y': self.sigma_y}


@dataclass(frozen=True, eq=False)
class BandwidthSearch:
    """
    Outcome of a cross-validated bandwidth search

    Parameters
    ----------
    bandwidth : Bandwidth
        Selected isotropic bandwidth
    sigmas, scores : numpy.ndarray
        Scanned bandwidths and their criterion values
    unimodal : bool
        Whether the scanned profile has a single local minimum
    at_boundary : bool
        Whether the minimum sits at an end of the search range
    degenerate : bool
        Whether the criterion is flat (identically zero) over the range
    """
    bandwidth: Bandwidth
    sigmas: np.ndarray
    scores: np.ndarray
    unimodal: bool
    at_boundary: bool
    degenerate: bool = False

    @property
    def sigma(self):
        return self.bandwidth.sigma_x

    def to_dict(self):
        return {
            'sigma': self.sigma,
            'unimodal': self.unimodal,
            'at_boundary': self.at_boundary,
            'degenerate': self.degenerate,
        }


def gaussian_kernel(d, bw):
    """
    Bivariate Gaussian kernel with independent axes

    Parameters
    ----------
    d : array-like
        Displacement vector(s) in kilometers, shape (2,) or (N, 2)
    bw : Bandwidth

    Returns
    -------
    float or numpy.ndarray
        Density per square kilometer
    """
    d = np.asarray(d, dtype=float)
    ux = d[..., 0] / bw.sigma_x
    uy = d[..., 1] / bw.sigma_y
    value = np.exp(-0.5 * (ux * ux + uy * uy)) / (2 * np.pi * bw.sigma_x * bw.sigma_y)
    return float(value) if np.ndim(value) == 0 else value


def _axis_factors(coords, centers, sigma):
    u = (coords[:, None] - centers[None, :]) / sigma
    g = np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * sigma)
    g[np.abs(u) > TRUNCATION] = 0.0
    return g


def _grid_factors(xy, grid, bw):
    xs, ys = grid.cell_centers()
    gx = _axis_factors(xy[:, 0], xs, bw.sigma_x)
    gy = _axis_factors(xy[:, 1], ys, bw.sigma_y)
    return gx, gy


def _pairwise_kernel(xy, bw):
    gx = _axis_factors(xy[:, 0], xy[:, 0], bw.sigma_x)
    gy = _axis_factors(xy[:, 1], xy[:, 1], bw.sigma_y)
    k = gx * gy
    np.fill_diagonal(k, 0.0)
    return k


def retained_mass(xy, bw, grid):
    """
    Kernel mass retained inside the window for kernels centered at each point

    The integral is the midpoint sum over the masked cells of the analysis grid.

    Returns
    -------
    numpy.ndarray
        One value per point, at most 1 up to discretization error
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    gx, gy = _grid_factors(xy, grid, bw)
    inner = gy @ grid.mask.astype(float)
    return grid.dx * grid.dy * np.sum(inner * gx, axis=1)


def edge_correction_many(xy, bw, grid):
    """Edge correction factors 1 / retained mass for an array of points"""
    mass = retained_mass(xy, bw, grid)
    if np.any(mass <= 0):
        raise EdgeCorrectionError(
            f"{int(np.sum(mass <= 0))} points retain no kernel mass inside the window; "
            "the bandwidth is too small for the grid or far larger than the window"
        )
    return 1.0 / mass


def edge_correction(x, w, bw, grid):
    """
    Edge correction factor for a kernel centered at x

    Parameters
    ----------
    x : PlanarPoint
        Kernel center, inside the window
    w : Window
    bw : Bandwidth
    grid : PixelImage
        Analysis grid masked to w

    Returns
    -------
    float
        Reciprocal of the kernel mass retained inside the window
    """
    if not contains(w, x):
        raise InputError(f"Point ({x.x}, {x.y}) lies outside the window")
    return float(edge_correction_many([[x.x, x.y]], bw, grid)[0])


def kernel_intensity(p, bw, grid, weights=None, edge=True):
    """
    Edge-corrected kernel estimate of the intensity on the analysis grid

    Parameters
    ----------
    p : PointPattern
    bw : Bandwidth
    grid : PixelImage
    weights : array-like, optional
        Non-negative weight per point, 1 by default
    edge : bool, optional
        Apply the per-point edge correction, by default True

    Returns
    -------
    PixelImage
        Intensity per square kilometer on the masked cells
    """
    if p.n == 0:
        return grid.filled(0.0)
    if weights is None:
        weights = np.ones(p.n)
    else:
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape[0] != p.n:
            raise InputError(f"Got {weights.shape[0]} weights for {p.n} points")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InputError("Weights must be finite and non-negative")
    gx, gy = _grid_factors(p.xy, grid, bw)
    if edge:
        inner = gy @ grid.mask.astype(float)
        mass = grid.dx * grid.dy * np.sum(inner * gx, axis=1)
        if np.any(mass <= 0):
            raise EdgeCorrectionError(f"{int(np.sum(mass <= 0))} points retain no kernel mass inside the window")
        weights = weights / mass
    surface = gy.T @ (weights[:, None] * gx)
    return grid.with_values(surface)


def nw_smooth(p, bw, grid):
    """
    Nadaraya-Watson smoother of the point marks over the analysis grid

    Cells where the kernel mass falls below NW_UNDERFLOW carry no estimate.

    Parameters
    ----------
    p : PointPattern
        Pattern whose marks are smoothed
    bw : Bandwidth
    grid : PixelImage

    Returns
    -------
    PixelImage
        Kernel-weighted mean of the marks
    """
    if p.marks is None:
        raise InputError("Nadaraya-Watson smoothing needs a marked pattern")
    if p.n == 0:
        return grid.with_values(np.full(grid.mask.shape, np.nan))
    gx, gy = _grid_factors(p.xy, grid, bw)
    numerator = gy.T @ (p.marks[:, None] * gx)
    denominator = gy.T @ gx
    with np.errstate(invalid='ignore', divide='ignore'):
        smooth = numerator / denominator
    smooth[denominator < NW_UNDERFLOW] = np.nan
    smooth = np.clip(smooth, p.marks.min(), p.marks.max())
    missing = int(np.sum(grid.mask & ~np.isfinite(smooth)))
    if missing:
        _logger.info("Smoother left %d of %d cells without an estimate", missing, grid.count)
    return grid.with_values(smooth)


def bw_scott(p):
    """
    Scott's rule bandwidth for a two-dimensional pattern

    Returns
    -------
    Bandwidth
        Sample standard deviation of each coordinate times n^(-1/6)
    """
    if p.n < 2:
        raise InputError("Scott's rule needs at least 2 points")
    sd = np.std(p.xy, axis=0, ddof=1)
    if np.any(sd <= 0):
        raise NumericalError("Scott's rule is undefined for zero coordinate variance")
    factor = p.n ** (-1.0 / 6.0)
    return Bandwidth(float(sd[0] * factor), float(sd[1] * factor))


def _search(criterion, srange, n_scan, label):
    lo, hi = srange
    if not (0 < lo < hi):
        raise InputError(f"Bandwidth search range must satisfy 0 < lo < hi, got {srange}")
    sigmas = np.geomspace(lo, hi, n_scan)
    scores = np.array([criterion(s) for s in sigmas])
    finite = np.isfinite(scores)
    if not np.any(finite):
        raise NumericalError(f"{label} criterion is undefined over the whole search range")
    ranked = np.where(finite, scores, np.inf)
    best = int(np.argmin(ranked))
    interior = ranked[1:-1]
    local_minima = np.sum((interior < ranked[:-2]) & (interior <= ranked[2:]))
    at_boundary = best in (0, n_scan - 1)
    unimodal = local_minima + int(at_boundary) == 1
    sigma = float(sigmas[best])
    if not at_boundary and ranked[best] < ranked[best - 1] and ranked[best] < ranked[best + 1]:
        bracket = (math.log(sigmas[best - 1]), math.log(sigmas[best]), math.log(sigmas[best + 1]))
        try:
            refined = minimize_scalar(lambda t: criterion(math.exp(t)), bracket=bracket, method='golden', tol=1e-6)
            if np.isfinite(refined.fun) and refined.fun <= ranked[best]:
                sigma = float(math.exp(refined.x))
        except ValueError as exc:
            _logger.debug("Golden-section refinement skipped: %s", exc)
    if not unimodal:
        _logger.warning("%s criterion is not unimodal over [%.4g, %.4g]; using the global minimum", label, lo, hi)
    elif at_boundary:
        _logger.warning("%s criterion is minimized at the end of the range [%.4g, %.4g]", label, lo, hi)
    return BandwidthSearch(Bandwidth.isotropic(sigma), sigmas, scores, bool(unimodal), bool(at_boundary))


def _default_range(window, grid=None):
    lo = window.diameter / 500.0
    if grid is not None:
        lo = max(lo, 0.5 * max(grid.dx, grid.dy))
    return lo, window.diameter / 4.0


def lscv_density_score(p, bw, grid):
    """Least-squares cross-validation criterion of the edge-corrected intensity estimate"""
    e = edge_correction_many(p.xy, bw, grid)
    surface = kernel_intensity(p, bw, grid)
    integral = grid.dx * grid.dy * float(np.sum(surface.values[grid.mask] ** 2))
    leave_one_out = _pairwise_kernel(p.xy, bw) @ e
    return integral - 2.0 * float(np.sum(leave_one_out))


def bw_lscv_density(p, grid, srange=None, n_scan=50):
    """
    Cross-validated bandwidth for the kernel intensity estimate

    Minimizes the integrated squared intensity minus twice the sum of the leave-one-out
    estimates at the data points, scanning a log-spaced range and refining the best
    interior point by golden-section search.

    Parameters
    ----------
    p : PointPattern
    grid : PixelImage
    srange : tuple of float, optional
        Search range in kilometers
    n_scan : int, optional
        Number of log-spaced bandwidths scanned, by default 50

    Returns
    -------
    BandwidthSearch
    """
    if p.n < 2:
        raise InputError("Cross-validation needs at least 2 points")
    srange = srange or _default_range(p.window, grid)

    def criterion(sigma):
        try:
            return lscv_density_score(p, Bandwidth.isotropic(sigma), grid)
        except EdgeCorrectionError:
            return np.inf

    return _search(criterion, srange, n_scan, "Intensity cross-validation")


def lscv_smoother_score(p, bw):
    """Leave-one-out squared prediction error of the Nadaraya-Watson smoother at the data points"""
    k = _pairwise_kernel(p.xy, bw)
    denominator = k.sum(axis=1)
    # a point without neighbours inside the kernel support has no leave-one-out prediction
    if np.any(denominator <= 0):
        return np.inf
    prediction = (k @ p.marks) / denominator
    return float(np.sum((p.marks - prediction) ** 2))


def bw_lscv_smoother(p, srange=None, n_scan=50):
    """
    Cross-validated bandwidth for the Nadaraya-Watson smoother

    Parameters
    ----------
    p : PointPattern
        Marked pattern
    srange : tuple of float, optional
        Search range in kilometers
    n_scan : int, optional

    Returns
    -------
    BandwidthSearch
        For constant marks the criterion vanishes everywhere; the smallest scanned
        bandwidth is returned with the degenerate flag set
    """
    if p.marks is None:
        raise InputError("Smoother cross-validation needs a marked pattern")
    if p.n < 3:
        raise InputError("Smoother cross-validation needs at least 3 points")
    srange = srange or _default_range(p.window)

    def criterion(sigma):
        return lscv_smoother_score(p, Bandwidth.isotropic(sigma))

    lo, hi = srange
    scale = max(1.0, float(np.sum(p.marks ** 2)))
    sigmas = np.geomspace(lo, hi, n_scan)
    if np.ptp(p.marks) == 0:
        scores = np.array([criterion(s) for s in sigmas])
        if np.all(np.where(np.isfinite(scores), scores, 0.0) <= 1e-24 * scale):
            _logger.warning("Marks are constant; smoother cross-validation is degenerate")
            return BandwidthSearch(Bandwidth.isotropic(float(sigmas[0])), sigmas, scores, False, True, True)
    return _search(criterion, srange, n_scan, "Smoother cross-validation")
