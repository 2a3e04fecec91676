"""
Command-line pipeline driver

Subcommands: density, smooth-covariate, test, fit, simulate, render. Each analysis
subcommand reads a configuration file, writes its rasters and JSON reports into the output
directory and closes with a run.json holding timings and a SHA-256 manifest of every file.

Exit status is 0 on success, 2 for input errors and 3 for numerical failures;
statistical outcomes never change it.
"""
import argparse
import logging
import os
import sys

import numpy as np

from spatial_ppm import __version__
from spatial_ppm.components.covariates import build_covariates
from spatial_ppm.components.export.pdf_export import generate_model_report
from spatial_ppm.components.export.reports import RunReport, write_json
from spatial_ppm.components.plotting import SCALES, render_html, render_png
from spatial_ppm.exceptions import InputError, NumericalError
from spatial_ppm.models.inference import (
    class_distribution,
    envelope_r_grid,
    k_envelope,
    ks_test_covariate,
    quadrat_test,
)
from spatial_ppm.models.pattern import aggregate_groups, average_intensity
from spatial_ppm.models.ppm import (
    build_quadrature,
    coefficient_table,
    fit_ppm,
    predict_intensity,
    residuals,
    score_vector,
    stepwise_backward,
)
from spatial_ppm.models.raster import GridSpec, build_grid, integrate, quantile_threshold
from spatial_ppm.models.sim import RngSeed, sim_cluster, sim_csr, sim_inhomogeneous, sim_poisson
from spatial_ppm.models.smoothing import Bandwidth, bw_lscv_density, bw_scott, kernel_intensity
from spatial_ppm.utils.config import load_config, parse_pair
from spatial_ppm.utils.io import (
    read_ascii_raster,
    read_observation_groups,
    read_points_csv,
    read_window,
    resample_to_grid,
    write_ascii_raster,
    write_points_csv,
)

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

# Residual cells flagged as the most over- and under-predicted areas
RESIDUAL_TAIL = 0.05

# Covariate classes in the exploratory class tables
CLASSES = 5


def _inputs(config, need_points=True):
    window = read_window(config.window, config.window_units, config.projection)
    grid = build_grid(GridSpec(window, *config.grid))
    points = None
    if need_points:
        if config.points:
            points = read_points_csv(config.points, window, config.points_units, config.projection)
        elif config.groups:
            groups = read_observation_groups(config.groups, config.points_units, config.projection)
            points = aggregate_groups(groups, window, config.max_radius)
            _logger.info("Aggregated %d observation groups into %d points", len(groups), points.n)
        else:
            raise InputError("Configuration needs a POINTS or GROUPS file")
    return window, grid, points


def _bandwidth_suggestions(points, grid):
    """Scott and cross-validated bandwidths, None where the pattern does not support them"""
    suggestions = {'scott': None, 'lscv': None}
    if points.n < 2:
        return suggestions
    try:
        suggestions['scott'] = bw_scott(points).to_dict()
    except NumericalError as exc:
        _logger.warning("No Scott bandwidth: %s", exc)
    try:
        suggestions['lscv'] = bw_lscv_density(points, grid).to_dict()
    except NumericalError as exc:
        _logger.warning("No cross-validated bandwidth: %s", exc)
    return suggestions


def _response_bandwidth(config, suggestions, points):
    if config.sigma is not None:
        return Bandwidth.isotropic(config.sigma), 'config'
    if suggestions['lscv'] is not None:
        return Bandwidth.isotropic(suggestions['lscv']['sigma']), 'lscv'
    if points.n == 0:
        return None, None
    raise InputError("SIGMA must be configured when no bandwidth can be selected from the points")


def _new_run(command, config):
    run = RunReport(command, config.output_dir, config=config.to_dict())
    os.makedirs(config.output_dir, exist_ok=True)
    return run


def cmd_density(config):
    """
    Kernel intensity of the response points

    Writes intensity.asc and density_report.json; the report compares the integral of the
    estimate with the number of points and lists the suggested bandwidths.
    """
    run = _new_run('density', config)
    with run.stage('load'):
        window, grid, points = _inputs(config)
    with run.stage('bandwidth'):
        suggestions = _bandwidth_suggestions(points, grid)
        bw, source = _response_bandwidth(config, suggestions, points)
    with run.stage('smooth'):
        if points.n == 0:
            _logger.warning("No response points; writing a zero intensity")
            intensity = grid.filled(0.0)
        else:
            intensity = kernel_intensity(points, bw, grid)
        run.record(write_ascii_raster(intensity, run.path('intensity.asc')))
    report = {
        'n': points.n,
        'area': window.area,
        'average_intensity': average_intensity(points),
        'sigma': config.sigma,
        'bandwidth': None if bw is None else bw.to_dict(),
        'bandwidth_source': source,
        'suggested': suggestions,
        'integral': integrate(intensity),
        'grid': {'nx': grid.nx, 'ny': grid.ny, 'dx': grid.dx, 'dy': grid.dy, 'masked_cells': grid.count},
    }
    run.write_json(report, 'density_report.json')
    run.finish()
    _logger.info("Intensity integrates to %.4g for %d points", report['integral'], points.n)
    return report


def cmd_smooth_covariate(config, names=None):
    """Build covariate images and write covariate_<name>.asc for each"""
    run = _new_run('smooth-covariate', config)
    specs = config.covariates if not names else tuple(config.covariate(n) for n in names)
    if not specs:
        raise InputError("No covariates configured")
    with run.stage('load'):
        _, grid, _ = _inputs(config, need_points=False)
    with run.stage('covariates'):
        images = build_covariates(specs, grid, config.points_units, config.projection)
    report = {}
    for spec in specs:
        img = images[spec.name]
        run.record(write_ascii_raster(img, run.path(f'covariate_{spec.name}.asc')))
        values = img.values[img.defined]
        report[spec.name] = {
            'kind': spec.kind,
            'sigma': spec.sigma,
            'radius': spec.radius,
            'log': spec.log,
            'defined_cells': img.defined_count,
            'min': float(values.min()) if values.size else None,
            'max': float(values.max()) if values.size else None,
        }
    run.write_json(report, 'covariates_report.json')
    run.finish()
    return report


def _class_table(points, img):
    values = img.values[img.defined]
    breaks = np.unique(np.quantile(values, np.linspace(0, 1, CLASSES + 1)))
    if len(breaks) < 2:
        return []
    breaks[0] = np.nextafter(breaks[0], -np.inf)
    table = class_distribution(points, img, breaks)
    return table.reset_index().to_dict(orient='records')


def cmd_test(config):
    """
    Tests of complete spatial randomness

    Quadrat chi-square, one spatial Kolmogorov-Smirnov test per configured covariate and a
    K function simulation envelope, written to test_report.json.
    """
    run = _new_run('test', config)
    with run.stage('load'):
        window, grid, points = _inputs(config)
        images = build_covariates(config.covariates, grid, config.points_units, config.projection)
    tests = []
    classes = {}
    with run.stage('quadrat'):
        tests.append(quadrat_test(points, *config.quadrat, grid=grid).to_dict())
    with run.stage('ks'):
        for name, img in images.items():
            result = ks_test_covariate(points, img).to_dict()
            result['covariate'] = name
            tests.append(result)
            classes[name] = _class_table(points, img)
    with run.stage('envelope'):
        r_grid = envelope_r_grid(window, config.k_rmax, config.k_steps)
        envelope, result = k_envelope(points, config.nsim, r_grid, seed=RngSeed(config.seed), grid=grid,
                                      threads=config.threads)
        tests.append(result.to_dict())
    report = {
        'n': points.n,
        'seed': config.seed,
        'tests': tests,
        'class_distribution': classes,
        'k_envelope': envelope.to_dict(),
    }
    run.write_json(report, 'test_report.json')
    run.finish()
    for test in tests:
        _logger.info("%s: statistic %.4g, p-value %.4g", test['method'], test['statistic'], test['p_value'])
    return report


def cmd_fit(config, pdf=False):
    """
    Fit the log-linear Poisson model and its residual diagnostics

    Writes lambda_hat.asc, residual_raw.asc, residual_pearson.asc and model_report.json,
    plus an optional PDF summary.
    """
    run = _new_run('fit', config)
    if not config.covariates:
        raise InputError("Model fitting needs at least one configured covariate")
    with run.stage('load'):
        _, grid, points = _inputs(config)
        if points.n == 0:
            raise InputError("Model fitting needs response points")
        images = build_covariates(config.covariates, grid, config.points_units, config.projection)
    with run.stage('fit'):
        q = build_quadrature(points, images, grid, log_covariates=[c.name for c in config.covariates if c.log])
        full = fit_ppm(q)
        removed = []
        final = full
        if config.stepwise:
            final, removed = stepwise_backward(q, config.alpha)
    with run.stage('residuals'):
        lambda_hat = predict_intensity(final, images, grid)
        suggestions = {'lscv': None} if config.sigma is not None else _bandwidth_suggestions(points, grid)
        bw, source = _response_bandwidth(config, suggestions, points)
        lambda_star = kernel_intensity(points, bw, grid)
        raw = residuals(lambda_star, lambda_hat, 'raw')
        pearson = residuals(lambda_star, lambda_hat, 'pearson')
        outputs = {
            'lambda_hat': lambda_hat,
            'lambda_star': lambda_star,
            'residual_raw': raw,
            'residual_pearson': pearson,
        }
        for name, img in outputs.items():
            run.record(write_ascii_raster(img, run.path(f'{name}.asc')))
    final_q = q
    for step in removed:
        final_q = final_q.drop(step.name)
    report = {
        'full_model': full.to_dict(),
        'final_model': final.to_dict(),
        'removed': [{'name': s.name, 'p_value': s.p_value} for s in removed],
        'alpha': config.alpha,
        'stepwise': config.stepwise,
        'max_abs_score': float(np.max(np.abs(score_vector(final, final_q)))),
        'quadrature': {'points': int(len(q.weights)), 'dummy_dropped': q.n_dummy_dropped},
        'bandwidth': bw.to_dict(),
        'bandwidth_source': source,
        'integral_lambda_hat': integrate(lambda_hat),
        'residual_thresholds': {
            kind: {'lower': quantile_threshold(img, RESIDUAL_TAIL), 'upper': quantile_threshold(img, 1 - RESIDUAL_TAIL)}
            for kind, img in (('raw', raw), ('pearson', pearson)) if img.defined_count
        },
    }
    run.write_json(report, 'model_report.json')
    _logger.info("Final model:\n%s", coefficient_table(final).to_string())
    if pdf:
        with run.stage('pdf'):
            images_out = []
            for name in ('lambda_hat', 'residual_raw'):
                png = run.record(run.path(f'{name}.png'))
                render_png(outputs[name], png)
                images_out.append((name.replace('_', ' '), png))
            run.record(generate_model_report(report, run.path('model_report.pdf'), images_out))
    run.finish()
    return report


def cmd_simulate(config, process='csr', n=None, lam=None, intensity=None, parents=None,
                 offspring=None, spread=None, out='simulated.csv'):
    """
    Simulate one pattern in the configured window and write it as a points CSV

    Parameters
    ----------
    process : str
        'csr' (n points), 'poisson' (intensity lam), 'inhomogeneous' (intensity raster)
        or 'cluster' (parents, offspring, spread)
    """
    run = _new_run('simulate', config)
    window, grid, _ = _inputs(config, need_points=False)
    seed = RngSeed(config.seed)
    if process == 'csr':
        if n is None:
            raise InputError("csr simulation needs --n")
        pattern = sim_csr(window, n, seed)
    elif process == 'poisson':
        if lam is None:
            raise InputError("poisson simulation needs --lambda")
        pattern = sim_poisson(window, lam, seed)
    elif process == 'inhomogeneous':
        if intensity is None:
            raise InputError("inhomogeneous simulation needs --intensity")
        lambda_img = resample_to_grid(read_ascii_raster(intensity), grid)
        pattern = sim_inhomogeneous(window, lambda_img, seed)
    elif process == 'cluster':
        if None in (parents, offspring, spread):
            raise InputError("cluster simulation needs --parents, --offspring and --spread")
        pattern = sim_cluster(window, parents, offspring, spread, seed)
    else:
        raise InputError(f"Unknown process {process!r}")
    run.record(write_points_csv(pattern, run.path(out)))
    run.finish()
    _logger.info("Simulated %d points (%s)", pattern.n, process)
    return pattern


def cmd_render(raster, out, palette='viridis', scale='linear', classes=8, html=None):
    """
    Render an ESRI ASCII raster as a PNG heatmap with a legend sidecar

    The legend is written next to the PNG as <name>.legend.json.
    """
    img = read_ascii_raster(raster)
    out_dir = os.path.dirname(os.path.abspath(out))
    os.makedirs(out_dir, exist_ok=True)
    legend = render_png(img, out, palette, scale, classes)
    write_json(legend, os.path.splitext(out)[0] + '.legend.json')
    if html:
        render_html(img, html, title=os.path.basename(raster), palette=palette)
    return legend


def _grid_arg(value):
    try:
        return parse_pair('--grid', value)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help="analysis configuration file (KEY=value)")
    common.add_argument('--seed', type=int, help="random seed")
    common.add_argument('--grid', type=_grid_arg, help="analysis grid as NXxNY")
    common.add_argument('--sigma', type=float, help="response kernel bandwidth in km")
    common.add_argument('--alpha', type=float, help="stepwise significance threshold")
    common.add_argument('--threads', type=int, help="worker cap for simulations")
    common.add_argument('--nsim', type=int, help="number of envelope simulations")
    common.add_argument('--output-dir', help="directory receiving rasters and reports")
    common.add_argument('--geo', action='store_true', help="response points are lon,lat degrees")

    parser = argparse.ArgumentParser(prog='spatial-ppm', description="Spatial point process analysis")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    verbosity.add_argument('-q', '--quiet', action='store_true', help="warnings and errors only")
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('density', parents=[common], help="kernel intensity of the response points")

    smooth = sub.add_parser('smooth-covariate', parents=[common], help="build covariate rasters")
    smooth.add_argument('--name', action='append', help="covariate to build (repeatable), all by default")

    test = sub.add_parser('test', parents=[common], help="tests of complete spatial randomness")
    test.add_argument('--rmax', type=float, help="largest envelope radius in km")
    test.add_argument('--nr', type=int, help="number of envelope radii, zero included")

    fit = sub.add_parser('fit', parents=[common], help="fit the Poisson model and residuals")
    fit.add_argument('--no-stepwise', action='store_true', help="skip backward elimination")
    fit.add_argument('--pdf', action='store_true', help="also write a PDF model report")

    simulate = sub.add_parser('simulate', parents=[common], help="simulate a point pattern")
    simulate.add_argument('--process', choices=('csr', 'poisson', 'inhomogeneous', 'cluster'), default='csr')
    simulate.add_argument('--n', type=int, help="number of points (csr)")
    simulate.add_argument('--lambda', dest='lam', type=float, help="intensity per km2 (poisson)")
    simulate.add_argument('--intensity', help="intensity raster (inhomogeneous)")
    simulate.add_argument('--parents', type=int, help="parent count (cluster)")
    simulate.add_argument('--offspring', type=int, help="offspring per parent (cluster)")
    simulate.add_argument('--spread', type=float, help="offspring displacement sd in km (cluster)")
    simulate.add_argument('--out', default='simulated.csv', help="output file name in the output directory")

    render = sub.add_parser('render', help="render a raster as a PNG heatmap")
    render.add_argument('raster', help="ESRI ASCII raster")
    render.add_argument('out', help="output PNG")
    render.add_argument('--palette', default='viridis', help="matplotlib colormap name")
    render.add_argument('--scale', choices=SCALES, default='linear')
    render.add_argument('--classes', type=int, default=8, help="number of color classes")
    render.add_argument('--html', help="also write an interactive HTML heatmap")
    return parser


def _setup_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )


def _config(args):
    overrides = {
        'seed': args.seed,
        'grid': args.grid,
        'sigma': args.sigma,
        'alpha': args.alpha,
        'threads': args.threads,
        'nsim': args.nsim,
        'output_dir': args.output_dir,
        'points_units': 'lonlat' if args.geo else None,
        'k_rmax': getattr(args, 'rmax', None),
        'k_steps': getattr(args, 'nr', None),
    }
    if getattr(args, 'no_stepwise', False):
        overrides['stepwise'] = False
    return load_config(args.config, overrides)


def _dispatch(args):
    if args.command == 'render':
        cmd_render(args.raster, args.out, args.palette, args.scale, args.classes, args.html)
        return
    config = _config(args)
    if args.command == 'density':
        cmd_density(config)
    elif args.command == 'smooth-covariate':
        cmd_smooth_covariate(config, args.name)
    elif args.command == 'test':
        cmd_test(config)
    elif args.command == 'fit':
        cmd_fit(config, pdf=args.pdf)
    elif args.command == 'simulate':
        cmd_simulate(config, args.process, args.n, args.lam, args.intensity, args.parents,
                     args.offspring, args.spread, args.out)


def main(argv=None):
    """Entry point; returns the process exit status"""
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    try:
        _dispatch(args)
    except (InputError, OSError) as exc:
        _logger.error("%s", exc)
        return EXIT_INPUT
    except NumericalError as exc:
        _logger.error("%s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
