"""
Tests of complete spatial randomness

Quadrat chi-square test, spatial Kolmogorov-Smirnov test against a covariate, Ripley's
K function with translation edge correction, and Monte Carlo simulation envelopes.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.raster import GridSpec, build_grid, lookup_many
from spatial_ppm.models.sim import sim_csr, simulate_replicates

_logger = logging.getLogger(__name__)

# Quadrats expecting fewer points than this are merged into their nearest neighbour
MIN_EXPECTED = 0.5


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test"""
    method: str
    statistic: float
    p_value: float
    df: Optional[int] = None
    n_used: int = 0
    n_dropped: int = 0
    details: dict = field(default_factory=dict, compare=False)

    # keeps pytest from collecting this class
    __test__ = False

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise InputError(f"p-value must lie in [0, 1], got {self.p_value}")

    def to_dict(self):
        return {
            'method': self.method,
            'statistic': self.statistic,
            'p_value': self.p_value,
            'df': self.df,
            'n_used': self.n_used,
            'n_dropped': self.n_dropped,
            'details': self.details,
        }


def _analysis_grid(p, grid):
    return grid if grid is not None else build_grid(GridSpec(p.window))


def _quadrat_index(xy, bbox, nx, ny):
    xmin, xmax, ymin, ymax = bbox
    qx = np.clip(np.floor((xy[:, 0] - xmin) / (xmax - xmin) * nx).astype(int), 0, nx - 1)
    qy = np.clip(np.floor((xy[:, 1] - ymin) / (ymax - ymin) * ny).astype(int), 0, ny - 1)
    return qy * nx + qx


def quadrat_test(p, nx, ny, grid=None):
    """
    Chi-square test of CSR from quadrat counts

    The window's bounding box is split into nx * ny quadrats. Expected counts are
    proportional to the masked-cell area of each quadrat; quadrats expecting fewer than
    MIN_EXPECTED points are merged into the nearest remaining quadrat.

    Parameters
    ----------
    p : PointPattern
    nx, ny : int
        Quadrats along x and y
    grid : PixelImage, optional
        Analysis grid used for the quadrat areas, 128x128 over the window by default

    Returns
    -------
    TestResult
    """
    if p.n < 1:
        raise InputError("Quadrat test needs at least one point")
    if nx < 1 or ny < 1:
        raise InputError(f"Quadrat grid needs at least one quadrat per axis, got {nx}x{ny}")
    grid = _analysis_grid(p, grid)
    bbox = p.window.bbox
    nq = nx * ny
    observed = np.bincount(_quadrat_index(p.xy, bbox, nx, ny), minlength=nq).astype(float)
    cells = np.bincount(_quadrat_index(grid.masked_centers(), bbox, nx, ny), minlength=nq).astype(float)
    expected = p.n * cells / cells.sum()

    xmin, xmax, ymin, ymax = bbox
    qx, qy = np.meshgrid((np.arange(nx) + 0.5) / nx, (np.arange(ny) + 0.5) / ny)
    centers = np.column_stack([xmin + qx.ravel() * (xmax - xmin), ymin + qy.ravel() * (ymax - ymin)])

    groups = [[q] for q in range(nq) if expected[q] > 0 or observed[q] > 0]
    obs = [observed[g[0]] for g in groups]
    exp = [expected[g[0]] for g in groups]
    merged = 0
    while len(groups) > 1 and min(exp) < MIN_EXPECTED:
        small = int(np.argmin(exp))
        here = centers[groups[small]].mean(axis=0)
        dist = [np.inf if k == small else np.hypot(*(centers[g].mean(axis=0) - here)) for k, g in enumerate(groups)]
        target = int(np.argmin(dist))
        groups[target] = groups[target] + groups[small]
        obs[target] += obs[small]
        exp[target] += exp[small]
        del groups[small], obs[small], exp[small]
        merged += 1
    if len(groups) < 2:
        raise InputError("All quadrats merged into one; use a finer quadrat grid")
    obs = np.array(obs)
    exp = np.array(exp)
    statistic = float(np.sum((obs - exp) ** 2 / exp))
    df = len(groups) - 1
    p_value = float(stats.chi2.sf(statistic, df))
    if merged:
        _logger.info("Merged %d low-expectation quadrats; %d quadrats used", merged, len(groups))
    return TestResult(
        method=f"quadrat chi-square {nx}x{ny}",
        statistic=statistic,
        p_value=min(max(p_value, 0.0), 1.0),
        df=df,
        n_used=p.n,
        n_dropped=0,
        details={
            'observed': obs.tolist(),
            'expected': exp.tolist(),
            'quadrats': [sorted(g) for g in groups],
        },
    )


def ks_test_covariate(p, covariate):
    """
    Spatial Kolmogorov-Smirnov test of CSR against a covariate

    Compares the covariate values at the data points with the area-weighted distribution
    of the covariate over the window. Points whose cell has no covariate value are
    dropped and counted.

    Parameters
    ----------
    p : PointPattern
    covariate : PixelImage

    Returns
    -------
    TestResult
    """
    cell_values = np.sort(covariate.values[covariate.defined])
    if cell_values.size == 0:
        raise InputError("Covariate has no defined cells")
    values, defined = lookup_many(covariate, p.xy)
    data = np.sort(values[defined])
    dropped = int(p.n - data.size)
    if data.size == 0:
        raise InputError("No data point has a defined covariate value")
    if dropped:
        _logger.warning("Kolmogorov-Smirnov test dropped %d of %d points without covariate value", dropped, p.n)
    z = np.union1d(data, cell_values)
    f_data = np.searchsorted(data, z, side='right') / data.size
    f_null = np.searchsorted(cell_values, z, side='right') / cell_values.size
    statistic = float(np.max(np.abs(f_data - f_null)))
    p_value = float(stats.kstwobign.sf(statistic * np.sqrt(data.size)))
    return TestResult(
        method="spatial Kolmogorov-Smirnov",
        statistic=statistic,
        p_value=min(max(p_value, 0.0), 1.0),
        df=None,
        n_used=int(data.size),
        n_dropped=dropped,
    )


def class_distribution(p, covariate, breaks):
    """
    Share of data points and of pixels falling in each covariate class

    Classes are right-closed intervals between consecutive breaks.

    Parameters
    ----------
    p : PointPattern
    covariate : PixelImage
    breaks : sequence of float
        Increasing class boundaries

    Returns
    -------
    pandas.DataFrame
        One row per class with point and pixel counts and percentages
    """
    values, defined = lookup_many(covariate, p.xy)
    bins = pd.IntervalIndex.from_breaks(list(breaks), closed='right')
    point_class = pd.cut(values[defined], bins)
    pixel_class = pd.cut(covariate.values[covariate.defined], bins)
    table = pd.DataFrame({
        'points': pd.Series(point_class).value_counts(sort=False).reindex(bins, fill_value=0),
        'pixels': pd.Series(pixel_class).value_counts(sort=False).reindex(bins, fill_value=0),
    })
    table['percent_points'] = 100.0 * table['points'] / max(int(defined.sum()), 1)
    table['percent_pixels'] = 100.0 * table['pixels'] / max(covariate.defined_count, 1)
    table.index = [f"]{iv.left:g};{iv.right:g}]" for iv in bins]
    table.index.name = 'class'
    return table


class TranslationCorrection:
    """
    Translation edge-correction weights from the set covariance of the masked grid

    The overlap area of the window with its own translate by h is tabulated at all
    whole-cell shifts by FFT autocorrelation of the mask and interpolated bilinearly.
    """

    def __init__(self, grid):
        mask = grid.mask.astype(float)
        cov = fftconvolve(mask, mask[::-1, ::-1], mode='full')
        cov = np.clip(np.rint(cov), 0, None) * grid.dx * grid.dy
        ny, nx = mask.shape
        sy = np.arange(-(ny - 1), ny) * grid.dy
        sx = np.arange(-(nx - 1), nx) * grid.dx
        self.area = float(cov[ny - 1, nx - 1])
        self._overlap = RegularGridInterpolator((sy, sx), cov, bounds_error=False, fill_value=0.0)

    def overlap(self, shifts):
        shifts = np.asarray(shifts, dtype=float).reshape(-1, 2)
        return self._overlap(shifts[:, ::-1])

    def weights(self, shifts):
        """|A| / |A intersected with A shifted by h|; zero where the overlap vanishes"""
        overlap = self.overlap(shifts)
        out = np.zeros_like(overlap)
        positive = overlap > 0
        out[positive] = self.area / overlap[positive]
        return out


@dataclass(frozen=True, eq=False)
class KFunctionEstimate:
    """Estimated K function on an increasing grid of radii"""
    r: np.ndarray
    khat: np.ndarray
    correction: str = 'translation'

    def to_dict(self):
        return {'r': self.r.tolist(), 'khat': self.khat.tolist(), 'correction': self.correction}


# Largest radius as a fraction of the shorter bounding-box side
K_RMAX_FRACTION = 0.25
ENVELOPE_RMAX_FRACTION = 0.1
ENVELOPE_STEPS = 2


def default_r_grid(window, steps=101, rmax=None, fraction=K_RMAX_FRACTION):
    """
    Evenly spaced radii from 0 to rmax

    Parameters
    ----------
    window : Window
    steps : int, optional
        Number of radii, the zero radius included
    rmax : float, optional
        Largest radius in kilometers, by default fraction times the shorter side of the
        bounding box

    Returns
    -------
    numpy.ndarray
    """
    if steps < 2:
        raise InputError(f"Radius grid needs at least 2 steps, got {steps}")
    if rmax is None:
        xmin, xmax, ymin, ymax = window.bbox
        rmax = fraction * min(xmax - xmin, ymax - ymin)
    if not rmax > 0:
        raise InputError(f"Largest radius must be positive, got {rmax}")
    return np.linspace(0.0, float(rmax), int(steps))


def envelope_r_grid(window, rmax=None, steps=ENVELOPE_STEPS):
    """
    Radii on which the envelope verdict is taken

    By default a single positive radius at a tenth of the shorter side, where the verdict
    has level 2 / (nsim + 1).
    """
    return default_r_grid(window, steps, rmax, ENVELOPE_RMAX_FRACTION)


def ripley_k(p, r_grid=None, grid=None, correction=None):
    """
    Ripley's K function with translation edge correction

    Parameters
    ----------
    p : PointPattern
    r_grid : array-like, optional
        Non-decreasing radii in kilometers
    grid : PixelImage, optional
        Analysis grid for the correction weights
    correction : TranslationCorrection, optional
        Precomputed weights, reused across simulated patterns in the same window

    Returns
    -------
    KFunctionEstimate
    """
    if p.n < 2:
        raise InputError("K function needs at least 2 points")
    r = default_r_grid(p.window) if r_grid is None else np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0 or np.any(r < 0) or np.any(np.diff(r) < 0):
        raise InputError("Radii must be non-negative and non-decreasing")
    if r[-1] > p.window.diameter:
        raise InputError(f"Largest radius {r[-1]:.4g} exceeds the window diagonal {p.window.diameter:.4g}")
    if correction is None:
        correction = TranslationCorrection(_analysis_grid(p, grid))
    pairs = cKDTree(p.xy).query_pairs(float(r[-1]), output_type='ndarray')
    khat = np.zeros_like(r)
    if len(pairs):
        shifts = p.xy[pairs[:, 1]] - p.xy[pairs[:, 0]]
        d = np.hypot(shifts[:, 0], shifts[:, 1])
        order = np.argsort(d)
        # each unordered pair contributes (i, j) and (j, i) with the same weight
        cumulative = np.cumsum(2.0 * correction.weights(shifts)[order])
        hits = np.searchsorted(d[order], r, side='right')
        khat = np.where(hits > 0, cumulative[np.maximum(hits - 1, 0)], 0.0)
    khat = p.window.area / (p.n ** 2) * khat
    return KFunctionEstimate(r, khat)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Pointwise simulation envelope of the K function and the observed curve"""
    r: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    nsim: int
    observed: Optional[np.ndarray] = None

    @property
    def exits(self):
        """Boolean array of radii where the observed curve leaves the envelope"""
        if self.observed is None:
            return np.zeros_like(self.r, dtype=bool)
        return (self.observed < self.lower) | (self.observed > self.upper)

    @property
    def outside(self):
        return bool(np.any(self.exits))

    @property
    def verdict(self):
        return 'outside' if self.outside else 'inside'

    def to_dict(self):
        return {
            'r': self.r.tolist(),
            'lower': self.lower.tolist(),
            'upper': self.upper.tolist(),
            'observed': None if self.observed is None else self.observed.tolist(),
            'nsim': self.nsim,
            'verdict': self.verdict,
        }


def pointwise_envelope(curves):
    """Pointwise minimum and maximum of a stack of curves of shape (nsim, len(r))"""
    curves = np.asarray(curves, dtype=float)
    return curves.min(axis=0), curves.max(axis=0)


def k_envelope(p, nsim, r_grid=None, seed=0, grid=None, threads=None):
    """
    Pointwise min/max envelope of K over CSR patterns with the same number of points

    Parameters
    ----------
    p : PointPattern
        Observed pattern
    nsim : int
        Number of simulated patterns
    r_grid : array-like, optional
        Radii of the verdict, envelope_r_grid by default
    seed : int or RngSeed
        Replicate i uses stream i + 1 of this seed
    grid : PixelImage, optional
    threads : int, optional
        Worker cap for the simulations

    Returns
    -------
    tuple
        (Envelope, TestResult) where the test result records the verdict
    """
    if nsim < 1:
        raise InputError("Envelope needs at least one simulation")
    grid = _analysis_grid(p, grid)
    correction = TranslationCorrection(grid)
    if r_grid is None:
        r_grid = envelope_r_grid(p.window)
    observed = ripley_k(p, r_grid, correction=correction)
    r = observed.r

    def simulate(s):
        return ripley_k(sim_csr(p.window, p.n, s), r, correction=correction).khat

    curves = simulate_replicates(simulate, seed, nsim, threads)
    lower, upper = pointwise_envelope(curves)
    envelope = Envelope(r, lower, upper, int(nsim), observed.khat)
    # a min/max envelope over nsim patterns has pointwise level 2 / (nsim + 1)
    result = TestResult(
        method="K function simulation envelope",
        statistic=float(np.sum(envelope.exits)),
        p_value=min(1.0, 2.0 / (nsim + 1)) if envelope.outside else 1.0,
        df=None,
        n_used=p.n,
        n_dropped=0,
        details={'nsim': int(nsim), 'verdict': envelope.verdict,
                 'exit_radii': r[envelope.exits].tolist()},
    )
    return envelope, result
