"""
Point patterns, observation-group aggregation and neighbour counting
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import PlanarPoint, contains_many, ring_signed_area

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """
    Finite set of planar points observed in a window, with optional numeric marks

    Parameters
    ----------
    xy : numpy.ndarray
        Array of shape (n, 2) of coordinates in kilometers
    window : Window
        Observation window; every point must lie inside it
    marks : numpy.ndarray, optional
        One finite real per point
    """
    xy: np.ndarray
    window: object
    marks: Optional[np.ndarray] = None
    ids: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise InputError("Point coordinates must be finite")
        outside = ~contains_many(self.window, xy)
        if np.any(outside):
            raise InputError(f"{int(outside.sum())} of {len(xy)} points lie outside the window")
        xy.setflags(write=False)
        object.__setattr__(self, 'xy', xy)
        if self.marks is not None:
            marks = np.array(self.marks, dtype=float).ravel()
            if marks.shape[0] != xy.shape[0]:
                raise InputError(f"Got {marks.shape[0]} marks for {xy.shape[0]} points")
            if not np.all(np.isfinite(marks)):
                raise InputError("Marks must be finite")
            marks.setflags(write=False)
            object.__setattr__(self, 'marks', marks)

    @classmethod
    def from_records(cls, xy, window, marks=None, ids=None):
        """
        Build a pattern from raw records, dropping points outside the window

        Dropped points are reported with a warning rather than failing the batch.

        Returns
        -------
        PointPattern
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        keep = contains_many(window, xy)
        dropped = int((~keep).sum())
        if dropped:
            _logger.warning("Dropped %d of %d points lying outside the window", dropped, len(xy))
        if marks is not None:
            marks = np.asarray(marks, dtype=float)[keep]
        if ids is not None:
            ids = tuple(i for i, k in zip(ids, keep) if k)
        return cls(xy[keep], window, marks, ids)

    @property
    def n(self):
        return self.xy.shape[0]

    def __len__(self):
        return self.n

    @property
    def x(self):
        return self.xy[:, 0]

    @property
    def y(self):
        return self.xy[:, 1]

    @property
    def points(self):
        return [PlanarPoint(float(x), float(y)) for x, y in self.xy]

    def with_marks(self, marks):
        return PointPattern(self.xy, self.window, marks, self.ids)

    def translate(self, dx, dy):
        return PointPattern(self.xy + np.array([dx, dy]), self.window.translate(dx, dy), self.marks, self.ids)

    def union(self, other):
        marks = None
        if self.marks is not None and other.marks is not None:
            marks = np.concatenate([self.marks, other.marks])
        return PointPattern(np.vstack([self.xy, other.xy]), self.window, marks)


@dataclass(frozen=True)
class ObservationGroup:
    """Witness locations reported for a single event"""
    id: str
    witness_points: tuple

    def __post_init__(self):
        if len(self.witness_points) == 0:
            raise InputError(f"Observation group {self.id!r} has no witness points")


def convex_hull_centroid(xy):
    """
    Area centroid of the convex hull of a set of points

    Fewer than three distinct points, or collinear points, fall back to the mean of the
    distinct points.

    Parameters
    ----------
    xy : numpy.ndarray
        Array of shape (k, 2)

    Returns
    -------
    tuple
        Centroid as a length-2 array and the hull vertices as an (h, 2) array
    """
    pts = np.unique(np.asarray(xy, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) >= 3:
        try:
            hull = ConvexHull(pts)
        except QhullError:
            hull = None
        if hull is not None:
            ring = pts[hull.vertices]
            area = ring_signed_area(ring)
            if area != 0:
                x = ring[:, 0]
                y = ring[:, 1]
                xn = np.roll(x, -1)
                yn = np.roll(y, -1)
                cross = x * yn - xn * y
                cx = np.sum((x + xn) * cross) / (6 * area)
                cy = np.sum((y + yn) * cross) / (6 * area)
                return np.array([cx, cy]), ring
    return pts.mean(axis=0), pts


def aggregate_observation(g, max_radius=20.0):
    """
    Collapse the witness locations of one event to a single point

    Parameters
    ----------
    g : ObservationGroup
        Witness locations of the event
    max_radius : float, optional
        Largest admissible distance in kilometers from the centroid to a hull vertex

    Returns
    -------
    PlanarPoint or None
        Centroid of the convex hull, or None when the event is excluded
    """
    if max_radius <= 0:
        raise InputError(f"Exclusion radius must be positive, got {max_radius}")
    xy = np.array([[p.x, p.y] for p in g.witness_points], dtype=float)
    centroid, vertices = convex_hull_centroid(xy)
    spread = float(np.max(np.hypot(*(vertices - centroid).T)))
    if spread > max_radius:
        _logger.debug("Excluded observation group %s: spread %.3f km > %.3f km", g.id, spread, max_radius)
        return None
    return PlanarPoint(float(centroid[0]), float(centroid[1]))


def aggregate_groups(groups, window, max_radius=20.0):
    """
    One point per observation group, excluded groups left out

    Returns
    -------
    PointPattern
        Hull centroids identified by group id; centroids outside the window are dropped
    """
    kept = []
    for g in groups:
        point = aggregate_observation(g, max_radius)
        if point is not None:
            kept.append((g.id, point))
    excluded = len(groups) - len(kept)
    if excluded:
        _logger.warning("Excluded %d of %d observation groups spread over more than %.4g km",
                        excluded, len(groups), max_radius)
    xy = np.array([[p.x, p.y] for _, p in kept], dtype=float).reshape(-1, 2)
    return PointPattern.from_records(xy, window, ids=tuple(key for key, _ in kept))


def count_within(pattern_sites, centers, radius):
    """
    Number of sites within a radius of every masked cell center

    Parameters
    ----------
    pattern_sites : PointPattern
        Site locations
    centers : PixelImage
        Grid whose masked cell centers are the query locations
    radius : float
        Neighbourhood radius in kilometers; the boundary is inclusive

    Returns
    -------
    PixelImage
        Site counts on the masked cells
    """
    if radius <= 0:
        raise InputError(f"Neighbourhood radius must be positive, got {radius}")
    counts = np.zeros(centers.mask.shape)
    if pattern_sites.n > 0:
        tree = cKDTree(pattern_sites.xy)
        found = tree.query_ball_point(centers.masked_centers(), r=radius, return_length=True)
        counts[centers.mask] = found
    return centers.with_values(counts)


def average_intensity(p):
    """Number of points per square kilometer of the window"""
    if p.window.area <= 0:
        raise InputError("Window area must be positive")
    return p.n / p.window.area
