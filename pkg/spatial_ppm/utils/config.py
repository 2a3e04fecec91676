"""
Analysis configuration

A configuration is a dotenv-style KEY=value file. Environment variables prefixed
SPATIAL_PPM_ override the file, and explicit overrides (command-line flags) override both.
Relative paths resolve against the directory of the configuration file.
"""
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

from dotenv import dotenv_values

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import ProjectionSpec

_logger = logging.getLogger(__name__)

ENV_PREFIX = 'SPATIAL_PPM_'

COVARIATE_KINDS = ('point-smooth', 'weighted-intensity', 'neighbor-count', 'raster')

_PROJECTION_KEYS = {
    'PROJECTION_LAT_1': 'lat_1',
    'PROJECTION_LAT_2': 'lat_2',
    'PROJECTION_LAT_0': 'lat_0',
    'PROJECTION_LON_0': 'lon_0',
    'PROJECTION_FALSE_EASTING': 'false_easting',
    'PROJECTION_FALSE_NORTHING': 'false_northing',
    'PROJECTION_SEMI_MAJOR': 'semi_major',
    'PROJECTION_FLATTENING': 'flattening',
}

_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off', '')


@dataclass(frozen=True)
class CovariateSpec:
    """
    How one covariate image is built

    Parameters
    ----------
    name : str
        Covariate name used in model terms
    source : str
        Points CSV for the point-based kinds, ESRI ASCII grid for 'raster'
    kind : str
        'point-smooth' (Nadaraya-Watson smoothing of point marks), 'weighted-intensity'
        (kernel intensity weighted by point marks), 'neighbor-count' (sites within a radius)
        or 'raster' (existing grid, resampled to the analysis grid)
    sigma : float, optional
        Kernel standard deviation in kilometers for the smoothing kinds
    radius : float, optional
        Neighbourhood radius in kilometers for 'neighbor-count'
    log : bool
        Enter the model on the log scale
    column : str
        Mark column of the source table
    """
    name: str
    source: str
    kind: str
    sigma: Optional[float] = None
    radius: Optional[float] = None
    log: bool = False
    column: str = 'value'

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise InputError(f"Covariate {self.name!r}: kind must be one of {COVARIATE_KINDS}, got {self.kind!r}")
        if self.kind in ('point-smooth', 'weighted-intensity') and not (self.sigma and self.sigma > 0):
            raise InputError(f"Covariate {self.name!r}: kind {self.kind} needs a positive sigma")
        if self.kind == 'neighbor-count' and not (self.radius and self.radius > 0):
            raise InputError(f"Covariate {self.name!r}: kind neighbor-count needs a positive radius")


@dataclass(frozen=True)
class AnalysisConfig:
    """Every setting of a batch analysis"""
    window: str
    points: Optional[str] = None
    groups: Optional[str] = None
    max_radius: float = 20.0
    window_units: str = 'km'
    points_units: str = 'km'
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    grid: tuple = (128, 128)
    sigma: Optional[float] = None
    quadrat: tuple = (6, 6)
    nsim: int = 39
    k_rmax: Optional[float] = None
    k_steps: int = 2
    seed: int = 0
    alpha: float = 0.05
    stepwise: bool = True
    output_dir: str = 'output'
    threads: Optional[int] = None
    covariates: tuple = ()

    def covariate(self, name):
        for spec in self.covariates:
            if spec.name == name:
                return spec
        raise InputError(f"No covariate named {name!r} in the configuration")

    def to_dict(self):
        data = asdict(self)
        data['grid'] = list(self.grid)
        data['quadrat'] = list(self.quadrat)
        return data


def parse_pair(key, value):
    try:
        nx, ny = (int(v) for v in str(value).lower().split('x'))
    except ValueError as exc:
        raise InputError(f"{key} must read NXxNY, got {value!r}") from exc
    if nx < 1 or ny < 1:
        raise InputError(f"{key} needs positive cell counts, got {value!r}")
    return nx, ny


def _parse_float(key, value):
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{key} must be a number, got {value!r}") from exc


def _parse_int(key, value):
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{key} must be an integer, got {value!r}") from exc


def _parse_bool(key, value):
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise InputError(f"{key} must be a boolean, got {value!r}")


def _resolve(base_dir, path):
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def _collect(path, environ):
    values = {}
    if path is not None:
        if not os.path.isfile(path):
            raise InputError(f"Configuration file {path} does not exist")
        values.update({k.upper(): v for k, v in dotenv_values(path).items() if v is not None})
    environ = os.environ if environ is None else environ
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            values[key[len(ENV_PREFIX):].upper()] = value
    return values


def _covariates(values, base_dir):
    names = [n.strip() for n in values.get('COVARIATES', '').split(',') if n.strip()]
    specs = []
    for name in names:
        prefix = f"COVARIATE_{name.upper()}_"
        source = values.get(prefix + 'SOURCE')
        if not source:
            raise InputError(f"Covariate {name!r} has no {prefix}SOURCE")
        specs.append(CovariateSpec(
            name=name,
            source=_resolve(base_dir, source),
            kind=values.get(prefix + 'KIND', 'raster'),
            sigma=_parse_float(prefix + 'SIGMA', values[prefix + 'SIGMA']) if prefix + 'SIGMA' in values else None,
            radius=_parse_float(prefix + 'RADIUS', values[prefix + 'RADIUS']) if prefix + 'RADIUS' in values else None,
            log=_parse_bool(prefix + 'LOG', values.get(prefix + 'LOG', 'false')),
            column=values.get(prefix + 'COLUMN', 'value'),
        ))
    return tuple(specs)


def load_config(path=None, overrides=None, environ=None):
    """
    Load and validate an analysis configuration

    Parameters
    ----------
    path : str, optional
        Configuration file; without one, settings come from the environment and overrides
    overrides : dict, optional
        Parsed values replacing file and environment settings, keyed by AnalysisConfig
        field name; None entries are ignored
    environ : dict, optional
        Environment to read SPATIAL_PPM_ variables from, os.environ by default

    Returns
    -------
    AnalysisConfig
    """
    values = _collect(path, environ)
    base_dir = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    if 'WINDOW' not in values:
        raise InputError("Configuration needs a WINDOW file")

    projection = {attr: _parse_float(key, values[key]) for key, attr in _PROJECTION_KEYS.items() if key in values}
    settings = dict(
        window=_resolve(base_dir, values['WINDOW']),
        points=_resolve(base_dir, values.get('POINTS')),
        groups=_resolve(base_dir, values.get('GROUPS')),
        max_radius=_parse_float('MAX_RADIUS', values.get('MAX_RADIUS', 20.0)),
        window_units=values.get('WINDOW_UNITS', 'km'),
        points_units=values.get('POINTS_UNITS', 'km'),
        projection=ProjectionSpec(**projection),
        grid=parse_pair('GRID', values.get('GRID', '128x128')),
        sigma=_parse_float('SIGMA', values['SIGMA']) if values.get('SIGMA') else None,
        quadrat=parse_pair('QUADRAT', values.get('QUADRAT', '6x6')),
        nsim=_parse_int('NSIM', values.get('NSIM', 39)),
        k_rmax=_parse_float('K_RMAX', values['K_RMAX']) if values.get('K_RMAX') else None,
        k_steps=_parse_int('K_STEPS', values.get('K_STEPS', 2)),
        seed=_parse_int('SEED', values.get('SEED', 0)),
        alpha=_parse_float('ALPHA', values.get('ALPHA', 0.05)),
        stepwise=_parse_bool('STEPWISE', values.get('STEPWISE', 'true')),
        output_dir=_resolve(base_dir, values.get('OUTPUT_DIR', 'output')),
        threads=_parse_int('THREADS', values['THREADS']) if values.get('THREADS') else None,
        covariates=_covariates(values, base_dir),
    )
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in settings:
                raise InputError(f"Unknown configuration override {key!r}")
            settings[key] = value
    config = AnalysisConfig(**settings)
    validate(config)
    _logger.debug("Loaded configuration from %s", path or 'environment')
    return config


def validate(config):
    """Check the invariants of a configuration; raises InputError naming the offending entry"""
    for units in (config.window_units, config.points_units):
        if units not in ('km', 'lonlat'):
            raise InputError(f"Coordinate units must be 'km' or 'lonlat', got {units!r}")
    if config.sigma is not None and not config.sigma > 0:
        raise InputError(f"SIGMA must be positive, got {config.sigma}")
    if config.nsim < 1:
        raise InputError(f"NSIM must be at least 1, got {config.nsim}")
    if config.seed < 0:
        raise InputError(f"SEED must be non-negative, got {config.seed}")
    if not 0 < config.alpha <= 1:
        raise InputError(f"ALPHA must lie in (0, 1], got {config.alpha}")
    if config.threads is not None and config.threads < 1:
        raise InputError(f"THREADS must be at least 1, got {config.threads}")
    if not config.max_radius > 0:
        raise InputError(f"MAX_RADIUS must be positive, got {config.max_radius}")
    if config.k_rmax is not None and not config.k_rmax > 0:
        raise InputError(f"K_RMAX must be positive, got {config.k_rmax}")
    if config.k_steps < 2:
        raise InputError(f"K_STEPS must be at least 2, got {config.k_steps}")
    if config.points and config.groups:
        raise InputError("POINTS and GROUPS are alternative response sources; set only one")

    named = [('window', config.window)]
    if config.points:
        named.append(('points', config.points))
    if config.groups:
        named.append(('observation groups', config.groups))
    named += [(f"covariate {c.name!r}", c.source) for c in config.covariates]
    seen = {}
    for label, path in named:
        if not os.path.isfile(path) or not os.access(path, os.R_OK):
            raise InputError(f"Input file for {label} is missing or unreadable: {path}")
        key = os.path.realpath(path)
        if key in seen:
            raise InputError(f"{label} and {seen[key]} refer to the same file {path}")
        seen[key] = label
    names = [c.name for c in config.covariates]
    if len(set(names)) != len(names):
        raise InputError("Covariate names must be distinct")
