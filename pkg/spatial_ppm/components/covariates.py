"""
Covariate images built from configured sources
"""
import logging

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.pattern import count_within
from spatial_ppm.models.smoothing import Bandwidth, kernel_intensity, nw_smooth
from spatial_ppm.utils.io import read_ascii_raster, read_points_csv, resample_to_grid

_logger = logging.getLogger(__name__)


def build_covariate(spec, grid, units='km', projection=None):
    """
    Build one covariate image on the analysis grid

    Parameters
    ----------
    spec : CovariateSpec
        Source and construction of the covariate
    grid : PixelImage
        Analysis grid; its window bounds the source points
    units : str, optional
        Coordinate units of point sources
    projection : ProjectionSpec, optional

    Returns
    -------
    PixelImage
        Covariate values on the raw scale; any log transform is applied by the model
    """
    if grid.window is None:
        raise InputError("Covariates need an analysis grid built from a window")
    if spec.kind == 'raster':
        img = resample_to_grid(read_ascii_raster(spec.source), grid)
    else:
        column = spec.column if spec.kind != 'neighbor-count' else None
        sites = read_points_csv(spec.source, grid.window, units, projection, mark_column=column)
        if spec.kind == 'point-smooth':
            img = nw_smooth(sites, Bandwidth.isotropic(spec.sigma), grid)
        elif spec.kind == 'weighted-intensity':
            img = kernel_intensity(sites, Bandwidth.isotropic(spec.sigma), grid, weights=sites.marks)
        else:
            img = count_within(sites, grid, spec.radius)
    missing = grid.count - img.defined_count
    if missing:
        _logger.warning("Covariate %s has no value on %d of %d cells", spec.name, missing, grid.count)
    _logger.info("Built covariate %s (%s)", spec.name, spec.kind)
    return img


def build_covariates(specs, grid, units='km', projection=None):
    """Covariate images keyed by name, in configuration order"""
    return {spec.name: build_covariate(spec, grid, units, projection) for spec in specs}
