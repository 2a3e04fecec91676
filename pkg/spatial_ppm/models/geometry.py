"""
Planar geometry primitives and the Lambert conformal conic projection

All planar coordinates are kilometers. Geographic coordinates are degrees.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from spatial_ppm.exceptions import InputError, ProjectionDomainError

_logger = logging.getLogger(__name__)

# Relative tolerance used to decide that a point lies on a polygon edge
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class PlanarPoint:
    """A location in the projected plane, kilometers east (x) and north (y)"""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputError(f"Planar point must have finite coordinates, got ({self.x}, {self.y})")


def ring_signed_area(ring):
    """
    Signed shoelace area of a closed ring

    Parameters
    ----------
    ring : numpy.ndarray
        Array of shape (k, 2); the closing vertex is implicit

    Returns
    -------
    float
        Positive for counter-clockwise rings, negative for clockwise rings
    """
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _segments_intersect(p1, p2, q1, q2):
    """Vectorised proper-or-touching intersection test of segment p1p2 against segments q1q2"""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_segment(a, b, c, d):
        # c collinear with ab and inside its bounding box
        return (d == 0) & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0])) \
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))

    touching = on_segment(q1, q2, p1, d1) | on_segment(q1, q2, p2, d2) \
        | on_segment(p1, p2, q1, d3) | on_segment(p1, p2, q2, d4)
    return proper | touching


def _ring_is_simple(ring):
    k = len(ring)
    starts = ring
    ends = np.roll(ring, -1, axis=0)
    index = np.arange(k)
    for i in range(k):
        # adjacent edges share a vertex and are skipped
        others = index[(index != i) & (index != (i + 1) % k) & (index != (i - 1) % k)]
        if others.size == 0:
            continue
        hits = _segments_intersect(
            np.broadcast_to(starts[i], (others.size, 2)),
            np.broadcast_to(ends[i], (others.size, 2)),
            starts[others],
            ends[others],
        )
        if np.any(hits):
            return False
    return True


def _clean_ring(coords):
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InputError(f"Polygon ring must be a list of (x, y) pairs, got shape {ring.shape}")
    if not np.all(np.isfinite(ring)):
        raise InputError("Polygon ring contains non-finite coordinates")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    # consecutive duplicate vertices carry no area
    keep = np.ones(len(ring), dtype=bool)
    keep[1:] = np.any(np.diff(ring, axis=0) != 0, axis=1)
    return ring[keep]


@dataclass(frozen=True, eq=False)
class Window:
    """
    Polygonal observation window

    The first ring is the outer boundary, any further rings are holes. Rings are stored
    without the repeated closing vertex.
    """
    rings: tuple
    area: float = field(init=False)
    bbox: tuple = field(init=False)

    def __post_init__(self):
        outer = self.rings[0]
        hole_area = sum(abs(ring_signed_area(r)) for r in self.rings[1:])
        area = abs(ring_signed_area(outer)) - hole_area
        all_vertices = np.vstack(self.rings)
        bbox = (
            float(all_vertices[:, 0].min()), float(all_vertices[:, 0].max()),
            float(all_vertices[:, 1].min()), float(all_vertices[:, 1].max()),
        )
        object.__setattr__(self, 'area', float(area))
        object.__setattr__(self, 'bbox', bbox)

    @classmethod
    def from_rings(cls, rings, check_simple=True):
        """
        Build a validated window from coordinate rings

        Parameters
        ----------
        rings : sequence
            Outer ring followed by hole rings, each a sequence of (x, y) pairs in kilometers
        check_simple : bool, optional
            Reject self-intersecting rings, by default True

        Returns
        -------
        Window
        """
        if not rings:
            raise InputError("A window needs at least an outer ring")
        cleaned = []
        for i, coords in enumerate(rings):
            ring = _clean_ring(coords)
            if len(ring) < 3 or abs(ring_signed_area(ring)) <= 0.0:
                kind = "Outer ring" if i == 0 else f"Hole ring {i}"
                raise InputError(f"{kind} is degenerate: needs at least 3 non-collinear vertices")
            if check_simple and not _ring_is_simple(ring):
                raise InputError(f"Ring {i} is self-intersecting")
            ring.setflags(write=False)
            cleaned.append(ring)
        window = cls(tuple(cleaned))
        if window.area <= 0:
            raise InputError(f"Window area must be positive, got {window.area}")
        return window

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax):
        return cls.from_rings([[(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]])

    @property
    def diameter(self):
        """Length of the bounding box diagonal"""
        xmin, xmax, ymin, ymax = self.bbox
        return math.hypot(xmax - xmin, ymax - ymin)

    def translate(self, dx, dy):
        shift = np.array([dx, dy], dtype=float)
        return Window.from_rings([r + shift for r in self.rings], check_simple=False)

    def contains(self, p):
        return contains(self, p)


def contains_many(w, xy):
    """
    Even-odd membership of many points

    Points lying exactly on an edge are reported inside.

    Parameters
    ----------
    w : Window
        Observation window
    xy : array-like
        Array of shape (N, 2) of planar coordinates

    Returns
    -------
    numpy.ndarray
        Boolean array of length N
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    px = xy[:, 0]
    py = xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    on_edge = np.zeros(len(xy), dtype=bool)
    scale = max(w.diameter, 1.0)
    for ring in w.rings:
        ends = np.roll(ring, -1, axis=0)
        for (ax, ay), (bx, by) in zip(ring, ends):
            ex = bx - ax
            ey = by - ay
            cross = ex * (py - ay) - ey * (px - ax)
            dot = ex * (px - ax) + ey * (py - ay)
            seg2 = ex * ex + ey * ey
            on_edge |= (np.abs(cross) <= _EDGE_TOL * scale * math.sqrt(seg2)) & (dot >= 0) & (dot <= seg2)
            straddles = (ay > py) != (by > py)
            if ey != 0:
                x_cross = ax + (py - ay) * ex / ey
                inside ^= straddles & (px < x_cross)
    return inside | on_edge


def contains(w, p):
    """
    Test whether a point lies in the window (even-odd rule, edges inside)

    Parameters
    ----------
    w : Window
    p : PlanarPoint

    Returns
    -------
    bool
    """
    return bool(contains_many(w, [[p.x, p.y]])[0])


def polygon_area(w):
    """
    Area of the window in square kilometers, holes subtracted

    Parameters
    ----------
    w : Window

    Returns
    -------
    float
    """
    if w.area <= 0:
        raise InputError("Degenerate window has no area")
    return w.area


def distance(p, q):
    """Euclidean distance between two planar points in kilometers"""
    return math.hypot(p.x - q.x, p.y - q.y)


@dataclass(frozen=True)
class ProjectionSpec:
    """
    Parameters of a two-standard-parallel Lambert conformal conic projection

    Defaults reproduce the French "Lambert II etendu" grid on the Clarke 1880 (IGN)
    ellipsoid, with the false origin expressed in kilometers.
    """
    lat_1: float = 45.898918964
    lat_2: float = 47.696014502
    lat_0: float = 46.8
    lon_0: float = 2.337229167
    false_easting: float = 600.0
    false_northing: float = 2200.0
    semi_major: float = 6378.2492
    flattening: float = 1.0 / 293.466021

    def __post_init__(self):
        if abs(self.lat_1) >= 90 or abs(self.lat_2) >= 90 or abs(self.lat_0) >= 90:
            raise InputError("Standard parallels and origin latitude must lie strictly between -90 and 90 degrees")
        if math.isclose(self.lat_1, -self.lat_2, abs_tol=1e-12):
            raise InputError("Standard parallels symmetric about the equator do not define a cone")
        if self.semi_major <= 0 or not (0 <= self.flattening < 1):
            raise InputError("Ellipsoid needs a positive semi-major axis and 0 <= flattening < 1")

    @property
    def eccentricity(self):
        return math.sqrt(2 * self.flattening - self.flattening ** 2)


class _LambertConstants:
    """Cone constants derived once per ProjectionSpec (Snyder's n, F, rho0)"""

    def __init__(self, spec):
        self.e = spec.eccentricity
        self.a = spec.semi_major
        phi1 = math.radians(spec.lat_1)
        phi2 = math.radians(spec.lat_2)
        m1 = self._m(phi1)
        m2 = self._m(phi2)
        t1 = self._t(phi1)
        t2 = self._t(phi2)
        if math.isclose(spec.lat_1, spec.lat_2):
            self.n = math.sin(phi1)
        else:
            self.n = (math.log(m1) - math.log(m2)) / (math.log(t1) - math.log(t2))
        self.F = m1 / (self.n * t1 ** self.n)
        self.rho0 = self.a * self.F * self._t(math.radians(spec.lat_0)) ** self.n
        self.lam0 = math.radians(spec.lon_0)
        self.fe = spec.false_easting
        self.fn = spec.false_northing

    def _m(self, phi):
        return np.cos(phi) / np.sqrt(1 - (self.e * np.sin(phi)) ** 2)

    def _t(self, phi):
        es = self.e * np.sin(phi)
        return np.tan(np.pi / 4 - phi / 2) / ((1 - es) / (1 + es)) ** (self.e / 2)


_CONSTANTS_CACHE = {}


def _constants(spec):
    consts = _CONSTANTS_CACHE.get(spec)
    if consts is None:
        consts = _LambertConstants(spec)
        _CONSTANTS_CACHE[spec] = consts
    return consts


def project_many(lon, lat, spec=None):
    """
    Forward Lambert conformal conic mapping of arrays of geographic coordinates

    Parameters
    ----------
    lon, lat : array-like
        Longitudes and latitudes in degrees
    spec : ProjectionSpec, optional
        Projection parameters, Lambert II etendu by default

    Returns
    -------
    tuple of numpy.ndarray
        Easting and northing in kilometers
    """
    spec = spec or ProjectionSpec()
    c = _constants(spec)
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if np.any(~np.isfinite(lat)) or np.any(np.abs(lat) >= 90):
        raise ProjectionDomainError("Latitude must be finite and strictly between -90 and 90 degrees")
    phi = np.radians(lat)
    t = c._t(phi)
    with np.errstate(over='ignore', divide='ignore'):
        rho = c.a * c.F * t ** c.n
    if np.any(~np.isfinite(rho)):
        raise ProjectionDomainError("Latitude lies outside the domain of the cone")
    theta = c.n * (np.radians(lon) - c.lam0)
    x = rho * np.sin(theta) + c.fe
    y = c.rho0 - rho * np.cos(theta) + c.fn
    return x, y


def project(lonlat, spec=None):
    """
    Project one (lon, lat) pair in degrees to a PlanarPoint in kilometers

    Parameters
    ----------
    lonlat : tuple of float
        Longitude and latitude in degrees
    spec : ProjectionSpec, optional

    Returns
    -------
    PlanarPoint
    """
    x, y = project_many([lonlat[0]], [lonlat[1]], spec)
    return PlanarPoint(float(x[0]), float(y[0]))


def unproject_many(x, y, spec=None, tol=1e-15, max_iter=50):
    """
    Inverse Lambert conformal conic mapping

    Latitude is recovered by fixed-point iteration on the conformal latitude.

    Returns
    -------
    tuple of numpy.ndarray
        Longitudes and latitudes in degrees
    """
    spec = spec or ProjectionSpec()
    c = _constants(spec)
    dx = np.asarray(x, dtype=float) - c.fe
    dy = c.rho0 - (np.asarray(y, dtype=float) - c.fn)
    sign = 1.0 if c.n > 0 else -1.0
    rho = sign * np.hypot(dx, dy)
    t = (rho / (c.a * c.F)) ** (1.0 / c.n)
    theta = np.arctan2(sign * dx, sign * dy)
    lam = theta / c.n + c.lam0
    phi = np.pi / 2 - 2 * np.arctan(t)
    for _ in range(max_iter):
        es = c.e * np.sin(phi)
        phi_next = np.pi / 2 - 2 * np.arctan(t * ((1 - es) / (1 + es)) ** (c.e / 2))
        done = np.max(np.abs(phi_next - phi)) < tol
        phi = phi_next
        if done:
            break
    return np.degrees(lam), np.degrees(phi)


def unproject(p, spec=None):
    """Inverse of project: PlanarPoint in kilometers to a (lon, lat) pair in degrees"""
    lon, lat = unproject_many([p.x], [p.y], spec)
    return float(lon[0]), float(lat[0])
