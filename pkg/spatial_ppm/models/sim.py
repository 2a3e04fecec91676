"""
Point pattern generators

Every generator draws from a Philox counter-based stream keyed by (seed, stream), so
replicate i of a Monte Carlo study is reproducible on its own and independent of how
replicates are scheduled across workers.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import contains_many
from spatial_ppm.models.pattern import PointPattern
from spatial_ppm.models.raster import lookup_many

_logger = logging.getLogger(__name__)

# Offspring redraws per cluster point before giving up
_MAX_REDRAWS = 10000


@dataclass(frozen=True)
class RngSeed:
    """Seed and replicate index; together they fully determine a random stream"""
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise InputError("Seed and stream must be non-negative integers")

    def generator(self):
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, stream):
        return RngSeed(self.seed, int(stream))


def _as_seed(seed):
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(int(seed))


def _uniform_in_window(w, n, rng):
    """Rejection sampling of n uniform points from the bounding box"""
    xmin, xmax, ymin, ymax = w.bbox
    out = np.empty((0, 2))
    if n == 0:
        return out
    acceptance = max(w.area / ((xmax - xmin) * (ymax - ymin)), 1e-3)
    chunks = []
    have = 0
    while have < n:
        batch = int((n - have) / acceptance * 1.2) + 16
        cand = np.column_stack([rng.uniform(xmin, xmax, batch), rng.uniform(ymin, ymax, batch)])
        cand = cand[contains_many(w, cand)]
        chunks.append(cand)
        have += len(cand)
    return np.vstack(chunks)[:n]


def sim_csr(w, n, seed):
    """
    Binomial process: exactly n independent uniform points in the window

    Parameters
    ----------
    w : Window
    n : int
        Number of points
    seed : RngSeed or int

    Returns
    -------
    PointPattern
    """
    if n < 0:
        raise InputError(f"Point count must be non-negative, got {n}")
    if w.area <= 0:
        raise InputError("Cannot simulate in a window of zero area")
    rng = _as_seed(seed).generator()
    return PointPattern(_uniform_in_window(w, int(n), rng), w)


def sim_poisson(w, lam, seed):
    """
    Homogeneous Poisson process of intensity lam per square kilometer

    Returns
    -------
    PointPattern
    """
    if lam < 0:
        raise InputError(f"Intensity must be non-negative, got {lam}")
    rng = _as_seed(seed).generator()
    n = int(rng.poisson(lam * w.area))
    return PointPattern(_uniform_in_window(w, n, rng), w)


def sim_inhomogeneous(w, lambda_img, seed):
    """
    Inhomogeneous Poisson process by thinning

    A homogeneous process at the maximal intensity is simulated and each point is
    retained with probability lambda(u) / lambda_max, lambda read from the cell
    containing the point. Points in cells without a value are never retained.

    Parameters
    ----------
    w : Window
    lambda_img : PixelImage
        Non-negative intensity per square kilometer
    seed : RngSeed or int

    Returns
    -------
    PointPattern
    """
    values = lambda_img.values[lambda_img.defined]
    if values.size and np.min(values) < 0:
        raise InputError("Intensity image must be non-negative")
    lam_max = float(values.max()) if values.size else 0.0
    if not np.isfinite(lam_max):
        raise InputError("Intensity image must have a finite maximum")
    rng = _as_seed(seed).generator()
    if lam_max == 0:
        return PointPattern(np.empty((0, 2)), w)
    n = int(rng.poisson(lam_max * w.area))
    xy = _uniform_in_window(w, n, rng)
    lam, defined = lookup_many(lambda_img, xy)
    keep_prob = np.where(defined, lam, 0.0) / lam_max
    keep = rng.uniform(size=len(xy)) < keep_prob
    return PointPattern(xy[keep], w)


def sim_cluster(w, n_parents, offspring_per_parent, sigma, seed):
    """
    Parent-offspring cluster process with Gaussian displacements

    Offspring falling outside the window are redrawn around the same parent.

    Parameters
    ----------
    w : Window
    n_parents, offspring_per_parent : int
    sigma : float
        Displacement standard deviation in kilometers
    seed : RngSeed or int

    Returns
    -------
    PointPattern
        n_parents * offspring_per_parent points
    """
    if n_parents < 1 or offspring_per_parent < 1:
        raise InputError("Cluster process needs at least one parent and one offspring per parent")
    if sigma <= 0:
        raise InputError(f"Cluster spread must be positive, got {sigma}")
    rng = _as_seed(seed).generator()
    parents = _uniform_in_window(w, int(n_parents), rng)
    centers = np.repeat(parents, int(offspring_per_parent), axis=0)
    xy = centers + rng.normal(scale=sigma, size=centers.shape)
    pending = ~contains_many(w, xy)
    attempts = 0
    while np.any(pending):
        attempts += 1
        if attempts > _MAX_REDRAWS:
            raise InputError("Offspring could not be placed inside the window; sigma is too large")
        idx = np.flatnonzero(pending)
        xy[idx] = centers[idx] + rng.normal(scale=sigma, size=(idx.size, 2))
        pending[idx] = ~contains_many(w, xy[idx])
    return PointPattern(xy, w)


def simulate_replicates(func, seed, nsim, threads=None):
    """
    Run func(RngSeed(seed, i)) for i = 1..nsim, optionally on a thread pool

    Stream 0 is left to the caller, e.g. for the observed or reference pattern.
    Results are returned in replicate order regardless of scheduling.
    """
    base = _as_seed(seed)
    seeds = [base.child(i + 1) for i in range(int(nsim))]
    if threads is not None and threads <= 1:
        return [func(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, seeds))
