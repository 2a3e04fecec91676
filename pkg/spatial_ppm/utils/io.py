"""
Reading and writing of points, windows and rasters

Points are CSV tables with x,y columns in kilometers or lon,lat columns in degrees.
Windows are GeoJSON-style Polygon geometries. Rasters are ESRI ASCII grids (north row
first, NODATA for cells without a value) or long-form x,y,value CSV tables.
"""
import json
import logging
import math

import numpy as np
import pandas as pd

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import PlanarPoint, Window, project_many
from spatial_ppm.models.pattern import ObservationGroup, PointPattern
from spatial_ppm.models.raster import PixelImage, lookup_many

_logger = logging.getLogger(__name__)

NODATA = -9999.0
PRECISION = 12
UNITS = ('km', 'lonlat')
GROUP_COLUMN = 'group_id'


def _check_units(units):
    if units not in UNITS:
        raise InputError(f"Coordinate units must be one of {UNITS}, got {units!r}")


def _planar(frame, units, spec, path):
    """Planar kilometer coordinates from the coordinate columns of a table"""
    _check_units(units)
    columns = ('x', 'y') if units == 'km' else ('lon', 'lat')
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    a = pd.to_numeric(frame[columns[0]], errors='coerce').to_numpy(dtype=float)
    b = pd.to_numeric(frame[columns[1]], errors='coerce').to_numpy(dtype=float)
    bad = ~(np.isfinite(a) & np.isfinite(b))
    if np.any(bad):
        raise InputError(f"{path}: {int(bad.sum())} rows have non-numeric coordinates")
    if units == 'lonlat':
        a, b = project_many(a, b, spec)
    return np.column_stack([a, b])


def _read_table(path):
    try:
        return pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"Cannot read {path}: {exc}") from exc


def read_points_csv(path, window, units='km', spec=None, mark_column=None):
    """
    Read a point pattern from a CSV table

    Points outside the window are dropped with a warning.

    Parameters
    ----------
    path : str
        CSV file with x,y (kilometers) or lon,lat (degrees) columns and an optional id column
    window : Window
    units : str, optional
        'km' or 'lonlat', by default 'km'
    spec : ProjectionSpec, optional
        Projection applied to lon/lat input
    mark_column : str, optional
        Column holding one numeric mark per point

    Returns
    -------
    PointPattern
    """
    frame = _read_table(path)
    if frame.empty:
        _logger.warning("No points in %s", path)
        return PointPattern(np.empty((0, 2)), window)
    xy = _planar(frame, units, spec, path)
    marks = None
    if mark_column is not None:
        if mark_column not in frame.columns:
            raise InputError(f"{path}: missing mark column {mark_column!r}")
        marks = pd.to_numeric(frame[mark_column], errors='coerce').to_numpy(dtype=float)
        if not np.all(np.isfinite(marks)):
            raise InputError(f"{path}: mark column {mark_column!r} has missing or non-numeric values")
    ids = tuple(frame['id'].astype(str)) if 'id' in frame.columns else None
    return PointPattern.from_records(xy, window, marks, ids)


def read_observation_groups(path, units='km', spec=None):
    """
    Read witness locations grouped by event from a group_id,x,y (or group_id,lon,lat) table

    Returns
    -------
    list of ObservationGroup
        In order of first appearance
    """
    frame = _read_table(path)
    if frame.empty:
        return []
    if GROUP_COLUMN not in frame.columns:
        raise InputError(f"{path}: missing column {GROUP_COLUMN!r}")
    xy = _planar(frame, units, spec, path)
    keys = frame[GROUP_COLUMN].astype(str).to_numpy()
    groups = []
    for key in pd.unique(keys):
        rows = xy[keys == key]
        groups.append(ObservationGroup(key, tuple(PlanarPoint(float(x), float(y)) for x, y in rows)))
    return groups


def write_points_csv(pattern, path):
    """Write a pattern as an x,y[,mark] CSV table in kilometers"""
    frame = pd.DataFrame({'x': pattern.x, 'y': pattern.y})
    if pattern.marks is not None:
        frame['mark'] = pattern.marks
    if pattern.ids is not None:
        frame.insert(0, 'id', list(pattern.ids))
    frame.to_csv(path, index=False, float_format=f'%.{PRECISION}g')
    return path


def _polygon_rings(doc):
    kind = doc.get('type')
    if kind == 'FeatureCollection':
        features = doc.get('features') or []
        if not features:
            raise InputError("Window feature collection is empty")
        return _polygon_rings(features[0])
    if kind == 'Feature':
        return _polygon_rings(doc.get('geometry') or {})
    if kind == 'Polygon':
        return doc['coordinates']
    if kind == 'MultiPolygon' and len(doc.get('coordinates', [])) == 1:
        return doc['coordinates'][0]
    raise InputError(f"Window must be a single Polygon geometry, got {kind!r}")


def read_window(path, units='km', spec=None):
    """
    Read a polygonal window from a GeoJSON-style file

    Parameters
    ----------
    path : str
        File holding a Polygon geometry, or a Feature or FeatureCollection wrapping one
    units : str, optional
        'km' for planar coordinates, 'lonlat' to project degrees on load
    spec : ProjectionSpec, optional

    Returns
    -------
    Window
    """
    _check_units(units)
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"Cannot read window file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"Window file {path} is not valid JSON: {exc}") from exc
    try:
        rings = [np.asarray(r, dtype=float)[:, :2] for r in _polygon_rings(doc)]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise InputError(f"Window file {path} has malformed coordinates") from exc
    if units == 'lonlat':
        rings = [np.column_stack(project_many(r[:, 0], r[:, 1], spec)) for r in rings]
    return Window.from_rings(rings)


def write_window(window, path):
    """Write a window as a GeoJSON Polygon with closed rings in kilometers"""
    rings = [np.vstack([r, r[:1]]).tolist() for r in window.rings]
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump({'type': 'Polygon', 'coordinates': rings}, fh)
    return path


def _format(value):
    return f'{value:.{PRECISION}g}'


def write_ascii_raster(img, path):
    """
    Write a pixel image as an ESRI ASCII grid

    Square cells are written with a cellsize key, other cells with dx and dy keys. Values
    carry 12 significant digits; cells without a value are written as NODATA.
    """
    lines = [
        f"ncols {img.nx}",
        f"nrows {img.ny}",
        f"xllcorner {_format(img.x0)}",
        f"yllcorner {_format(img.y0)}",
    ]
    if math.isclose(img.dx, img.dy, rel_tol=1e-12):
        lines.append(f"cellsize {_format(img.dx)}")
    else:
        lines.append(f"dx {_format(img.dx)}")
        lines.append(f"dy {_format(img.dy)}")
    lines.append(f"NODATA_value {_format(NODATA)}")
    values = np.where(img.defined, img.values, NODATA)
    for row in values[::-1]:
        lines.append(' '.join(_format(v) for v in row))
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write('\n'.join(lines) + '\n')
    return path


_HEADER_KEYS = ('ncols', 'nrows', 'xllcorner', 'yllcorner', 'xllcenter', 'yllcenter',
                'cellsize', 'dx', 'dy', 'nodata_value')


def read_ascii_raster(path, window=None):
    """
    Read an ESRI ASCII grid into a pixel image

    The mask holds the cells whose value differs from NODATA.

    Parameters
    ----------
    path : str
    window : Window, optional
        Window to attach to the image

    Returns
    -------
    PixelImage
    """
    header = {}
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            lines = fh.read().split('\n')
    except OSError as exc:
        raise InputError(f"Cannot read raster {path}: {exc}") from exc
    body_start = 0
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in _HEADER_KEYS:
            header[parts[0].lower()] = parts[1]
            body_start = i + 1
        elif parts:
            break
    try:
        nx = int(header['ncols'])
        ny = int(header['nrows'])
        if 'cellsize' in header:
            dx = dy = float(header['cellsize'])
        else:
            dx = float(header['dx'])
            dy = float(header['dy'])
        if 'xllcorner' in header:
            x0 = float(header['xllcorner'])
            y0 = float(header['yllcorner'])
        else:
            x0 = float(header['xllcenter']) - dx / 2
            y0 = float(header['yllcenter']) - dy / 2
        nodata = float(header.get('nodata_value', NODATA))
        body = np.array(' '.join(lines[body_start:]).split(), dtype=float)
    except (KeyError, ValueError) as exc:
        raise InputError(f"Raster {path} has a malformed header or body: {exc}") from exc
    if body.size != nx * ny:
        raise InputError(f"Raster {path} holds {body.size} values for a {nx}x{ny} grid")
    values = body.reshape(ny, nx)[::-1]
    mask = ~np.isclose(values, nodata, rtol=0, atol=1e-9 * max(1.0, abs(nodata))) & np.isfinite(values)
    return PixelImage(x0, y0, dx, dy, mask, np.where(mask, values, np.nan), window)


def write_raster_csv(img, path):
    """Write the defined cells of an image as a long-form x,y,value CSV table"""
    xs, ys = img.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    defined = img.defined
    frame = pd.DataFrame({'x': gx[defined], 'y': gy[defined], 'value': img.values[defined]})
    frame.to_csv(path, index=False, float_format=f'%.{PRECISION}g')
    return path


def read_raster_csv(path, grid):
    """
    Read a long-form x,y,value table onto a grid

    Each row sets the cell containing (x, y); rows off the masked grid are ignored.

    Returns
    -------
    PixelImage
    """
    frame = _read_table(path)
    values = np.full(grid.mask.shape, np.nan)
    if frame.empty:
        return grid.with_values(values)
    missing = [c for c in ('x', 'y', 'value') if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    xy = frame[['x', 'y']].to_numpy(dtype=float)
    col, row, inside = grid.cell_index(xy)
    keep = inside & grid.mask[row, col]
    values[row[keep], col[keep]] = frame['value'].to_numpy(dtype=float)[keep]
    return grid.with_values(values)


def resample_to_grid(img, grid):
    """Values of an image at the masked cell centers of another grid, nearest-cell lookup"""
    if img.same_grid(grid):
        return img
    values = np.full(grid.mask.shape, np.nan)
    found, _ = lookup_many(img, grid.masked_centers())
    values[grid.mask] = found
    return grid.with_values(values)
