import json
from pathlib import Path

import numpy as np
import pytest
from matplotlib import image as mpimg

from spatial_ppm.components.covariates import build_covariate, build_covariates
from spatial_ppm.components.export.pdf_export import generate_model_report
from spatial_ppm.components.export.reports import RunReport, sha256, write_json
from spatial_ppm.components.plotting import color_breaks, render_html, render_png, to_rgba
from spatial_ppm.exceptions import InputError
from spatial_ppm.models.raster import GridSpec, build_grid, integrate, quantile_threshold
from spatial_ppm.utils.config import CovariateSpec
from spatial_ppm.utils.io import write_ascii_raster


@pytest.fixture
def sites_csv(tmp_path):
    path = tmp_path / 'sites.csv'
    path.write_text('x,y,value\n0.25,0.25,1.0\n0.75,0.75,3.0\n0.5,0.5,2.0\n')
    return str(path)


def test_point_smooth_covariate(sites_csv, unit_grid):
    img = build_covariate(CovariateSpec('v', sites_csv, 'point-smooth', sigma=0.2), unit_grid)
    values = img.values[img.defined]
    assert values.min() >= 1.0 - 1e-12
    assert values.max() <= 3.0 + 1e-12


def test_weighted_intensity_covariate(sites_csv, unit_grid):
    img = build_covariate(CovariateSpec('w', sites_csv, 'weighted-intensity', sigma=0.1), unit_grid)
    assert integrate(img) == pytest.approx(6.0, rel=1e-9)


def test_neighbor_count_covariate(sites_csv, unit_grid):
    img = build_covariate(CovariateSpec('c', sites_csv, 'neighbor-count', radius=2.0), unit_grid)
    assert np.all(img.values[unit_grid.mask] == 3)


def test_raster_covariate_is_resampled(tmp_path, unit_square, unit_grid, ramp):
    coarse = build_grid(GridSpec(unit_square, 8, 8))
    path = write_ascii_raster(coarse.filled(4.0), str(tmp_path / 'c.asc'))
    images = build_covariates([CovariateSpec('r', path, 'raster')], unit_grid)
    assert images['r'].same_grid(unit_grid)
    assert np.all(images['r'].values == 4.0)


def test_covariate_sites_outside_window_are_dropped(tmp_path, unit_grid, caplog):
    path = tmp_path / 'far.csv'
    path.write_text('x,y\n0.5,0.5\n5.0,5.0\n')
    img = build_covariate(CovariateSpec('c', str(path), 'neighbor-count', radius=0.1), unit_grid)
    assert img.values.max() == 1
    assert 'Dropped 1' in caplog.text


def test_linear_breaks(unit_grid, ramp):
    breaks = color_breaks(ramp, 'linear', classes=4)
    assert len(breaks) == 5
    assert breaks[0] == pytest.approx(ramp.values.min())
    assert breaks[-1] == pytest.approx(ramp.values.max())


def test_quantile_breaks_match_thresholds(ramp):
    breaks = color_breaks(ramp, 'quantile', classes=4)
    assert breaks == [quantile_threshold(ramp, k / 4) for k in range(5)]
    with pytest.raises(InputError):
        color_breaks(ramp, 'log')


def test_constant_image_is_single_color(unit_grid):
    rgba, _ = to_rgba(unit_grid.filled(1.0))
    flat = rgba.reshape(-1, 4)
    assert np.all(flat == flat[0])
    assert flat[0, 3] == 1.0


def test_undefined_cells_are_transparent(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 2))
    img = grid.with_values(np.array([[1.0, 2.0], [np.nan, 4.0]]))
    rgba, _ = to_rgba(img)
    # north row first: the missing cell of the upper row sits at the top left
    assert rgba[0, 0, 3] == 0.0
    assert rgba[1, 0, 3] == 1.0


def test_unknown_palette(ramp):
    with pytest.raises(InputError):
        to_rgba(ramp, palette='no-such-palette')


def test_render_png_dimensions(tmp_path, unit_square):
    grid = build_grid(GridSpec(unit_square, 12, 7))
    path = str(tmp_path / 'map.png')
    legend = render_png(grid.filled(2.0), path)
    assert mpimg.imread(path).shape == (7, 12, 4)
    assert (legend['nx'], legend['ny']) == (12, 7)


def test_render_html(tmp_path, ramp):
    path = render_html(ramp, str(tmp_path / 'map.html'), title='ramp')
    assert '<html>' in Path(path).read_text().lower()


def test_write_json_is_canonical(tmp_path):
    path = write_json({'b': 1 / 3, 'a': [np.float64(np.inf), np.int64(2), True]}, str(tmp_path / 'r.json'))
    text = Path(path).read_text()
    assert text.index('"a"') < text.index('"b"')
    data = json.loads(text)
    assert data['b'] == 0.3333333333
    assert data['a'] == [None, 2, True]


def test_run_report_manifest(tmp_path):
    run = RunReport('density', str(tmp_path / 'out'))
    with run.stage('write'):
        report = run.write_json({'n': 3}, 'report.json')
    path = run.finish()
    data = json.loads(Path(path).read_text())
    assert data['command'] == 'density'
    assert 'write' in data['timings']
    assert data['manifest'] == [{'file': 'report.json', 'sha256': sha256(report)}]


def test_pdf_model_report(tmp_path):
    model = {
        'coefficients': [
            {'name': '(Intercept)', 'beta': 1.0, 'se': 0.1, 'p': 0.0},
            {'name': 'x', 'beta': 0.5, 'se': 0.2, 'p': 0.01},
        ],
        'loglik': -120.5, 'converged': True, 'iterations': 6, 'n_data': 40, 'n_dropped': 0,
    }
    report = {'full_model': model, 'final_model': model, 'removed': [{'name': 'noise', 'p_value': 0.4}]}
    path = generate_model_report(report, str(tmp_path / 'model.pdf'))
    assert Path(path).read_bytes().startswith(b'%PDF')
