import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import Window, project_many
from spatial_ppm.models.pattern import PointPattern
from spatial_ppm.models.raster import GridSpec, build_grid
from spatial_ppm.utils.config import CovariateSpec, load_config, parse_pair
from spatial_ppm.utils.io import (
    NODATA,
    read_ascii_raster,
    read_observation_groups,
    read_points_csv,
    read_raster_csv,
    read_window,
    resample_to_grid,
    write_ascii_raster,
    write_points_csv,
    write_raster_csv,
    write_window,
)


@pytest.fixture
def square_file(tmp_path):
    path = tmp_path / 'window.geojson'
    path.write_text(json.dumps({'type': 'Polygon', 'coordinates': [[[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]]]}))
    return str(path)


def test_read_window_variants(tmp_path, square_file):
    assert read_window(square_file).area == pytest.approx(100.0)
    feature = tmp_path / 'feature.json'
    feature.write_text(json.dumps({
        'type': 'FeatureCollection',
        'features': [{'type': 'Feature', 'properties': {}, 'geometry': json.loads(Path(square_file).read_text())}],
    }))
    assert read_window(str(feature)).area == pytest.approx(100.0)


def test_read_window_rejects_other_geometry(tmp_path):
    path = tmp_path / 'line.json'
    path.write_text(json.dumps({'type': 'LineString', 'coordinates': [[0, 0], [1, 1]]}))
    with pytest.raises(InputError):
        read_window(str(path))
    path.write_text('{not json')
    with pytest.raises(InputError):
        read_window(str(path))


def test_window_round_trip(tmp_path, irregular_window):
    path = write_window(irregular_window, str(tmp_path / 'w.json'))
    back = read_window(path)
    assert back.area == pytest.approx(irregular_window.area)
    assert back.bbox == irregular_window.bbox


def test_read_points_drops_outside(tmp_path, square_file, caplog):
    path = tmp_path / 'points.csv'
    pd.DataFrame({'id': ['a', 'b', 'c'], 'x': [1.0, 5.0, 20.0], 'y': [1.0, 5.0, 5.0]}).to_csv(path, index=False)
    p = read_points_csv(str(path), read_window(square_file))
    assert p.n == 2
    assert p.ids == ('a', 'b')
    assert 'Dropped 1' in caplog.text


def test_read_points_empty_file(tmp_path, square_file):
    path = tmp_path / 'empty.csv'
    path.write_text('')
    assert read_points_csv(str(path), read_window(square_file)).n == 0
    path.write_text('x,y\n')
    assert read_points_csv(str(path), read_window(square_file)).n == 0


def test_read_points_bad_rows(tmp_path, square_file):
    path = tmp_path / 'bad.csv'
    path.write_text('x,y\n1,2\nfoo,3\n')
    with pytest.raises(InputError):
        read_points_csv(str(path), read_window(square_file))
    path.write_text('a,b\n1,2\n')
    with pytest.raises(InputError):
        read_points_csv(str(path), read_window(square_file))


def test_read_points_with_marks(tmp_path, square_file):
    path = tmp_path / 'marked.csv'
    path.write_text('x,y,value\n1,1,3.5\n2,2,4.5\n')
    p = read_points_csv(str(path), read_window(square_file), mark_column='value')
    np.testing.assert_array_equal(p.marks, [3.5, 4.5])
    with pytest.raises(InputError):
        read_points_csv(str(path), read_window(square_file), mark_column='missing')


def test_read_points_lonlat(tmp_path):
    lon = np.array([2.0, 2.5, 3.0])
    lat = np.array([46.0, 46.5, 47.0])
    x, y = project_many(lon, lat)
    window = Window.rectangle(x.min() - 10, x.max() + 10, y.min() - 10, y.max() + 10)
    path = tmp_path / 'lonlat.csv'
    pd.DataFrame({'lon': lon, 'lat': lat}).to_csv(path, index=False)
    p = read_points_csv(str(path), window, units='lonlat')
    np.testing.assert_allclose(p.x, x)
    np.testing.assert_allclose(p.y, y)
    with pytest.raises(InputError):
        read_points_csv(str(path), window, units='miles')


def test_points_round_trip(tmp_path, irregular_window):
    rng = np.random.default_rng(2)
    xy = np.array([[40.0, 40.0], [60.0, 70.0], [30.0, 80.0]]) + rng.uniform(-1, 1, (3, 2))
    p = PointPattern(xy, irregular_window, marks=[1.0, 2.0, 3.0])
    path = write_points_csv(p, str(tmp_path / 'p.csv'))
    back = read_points_csv(path, irregular_window, mark_column='mark')
    np.testing.assert_allclose(back.xy, p.xy, rtol=1e-11)
    np.testing.assert_array_equal(back.marks, p.marks)


def test_observation_groups(tmp_path):
    path = tmp_path / 'groups.csv'
    path.write_text('group_id,x,y\ne1,0,0\ne2,5,5\ne1,2,0\n')
    groups = read_observation_groups(str(path))
    assert [g.id for g in groups] == ['e1', 'e2']
    assert len(groups[0].witness_points) == 2
    path.write_text('x,y\n0,0\n')
    with pytest.raises(InputError):
        read_observation_groups(str(path))


def test_ascii_raster_layout(tmp_path, unit_square):
    grid = build_grid(GridSpec(unit_square, 3, 2))
    values = np.array([[1.0, 2.0, 3.0], [4.0, np.nan, 6.0]])
    path = write_ascii_raster(grid.with_values(values), str(tmp_path / 'r.asc'))
    lines = Path(path).read_text().splitlines()
    assert lines[0] == 'ncols 3'
    assert lines[1] == 'nrows 2'
    assert lines[4].startswith('dx ')
    assert lines[6] == 'NODATA_value -9999'
    # north row first
    assert lines[7].split() == ['4', '-9999', '6']
    assert lines[8].split() == ['1', '2', '3']
    back = read_ascii_raster(path)
    assert back.mask.sum() == 5
    assert np.isnan(back.values[1, 1])
    np.testing.assert_array_equal(back.values[0], [1.0, 2.0, 3.0])
    assert back.dx == pytest.approx(1 / 3)


def test_ascii_raster_square_cells_and_center_header(tmp_path):
    path = tmp_path / 'c.asc'
    path.write_text('ncols 2\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\nNODATA_value -1\n7 -1\n')
    img = read_ascii_raster(str(path))
    assert (img.x0, img.y0, img.dx, img.dy) == (0.0, 0.0, 1.0, 1.0)
    assert img.mask.tolist() == [[True, False]]


def test_ascii_raster_size_mismatch(tmp_path):
    path = tmp_path / 'bad.asc'
    path.write_text('ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n')
    with pytest.raises(InputError):
        read_ascii_raster(str(path))


def test_nodata_constant():
    assert NODATA == -9999.0


def test_raster_csv_round_trip(tmp_path, unit_grid, ramp):
    path = write_raster_csv(ramp, str(tmp_path / 'r.csv'))
    back = read_raster_csv(path, unit_grid)
    np.testing.assert_allclose(back.values, ramp.values, rtol=1e-11)


def test_resample_to_grid(unit_square, unit_grid, ramp):
    coarse = build_grid(GridSpec(unit_square, 4, 4))
    down = resample_to_grid(ramp, coarse)
    assert down.same_grid(coarse)
    xs, _ = coarse.cell_centers()
    np.testing.assert_allclose(down.values[0], xs, atol=1 / 64)
    assert resample_to_grid(ramp, unit_grid) is ramp


@pytest.fixture
def config_dir(tmp_path, square_file):
    (tmp_path / 'points.csv').write_text('x,y\n1,1\n')
    (tmp_path / 'pop.asc').write_text('ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 10\n1\n')
    (tmp_path / 'analysis.env').write_text(
        'WINDOW=window.geojson\n'
        'POINTS=points.csv\n'
        'GRID=32x16\n'
        'NSIM=19\n'
        'COVARIATES=pop\n'
        'COVARIATE_POP_SOURCE=pop.asc\n'
        'COVARIATE_POP_LOG=true\n'
    )
    return tmp_path


def test_load_config(config_dir):
    config = load_config(str(config_dir / 'analysis.env'), environ={})
    assert config.grid == (32, 16)
    assert config.nsim == 19
    assert config.seed == 0
    assert config.quadrat == (6, 6)
    assert (config.k_rmax, config.k_steps) == (None, 2)
    assert config.groups is None
    assert config.max_radius == 20.0
    assert config.window == str(config_dir / 'window.geojson')
    spec = config.covariate('pop')
    assert spec.kind == 'raster'
    assert spec.log
    with pytest.raises(InputError):
        config.covariate('missing')


def test_environment_and_overrides(config_dir):
    path = str(config_dir / 'analysis.env')
    config = load_config(path, environ={'SPATIAL_PPM_NSIM': '99', 'SPATIAL_PPM_SEED': '5', 'OTHER': 'x'})
    assert config.nsim == 99
    assert config.seed == 5
    config = load_config(path, overrides={'nsim': 9, 'seed': None}, environ={'SPATIAL_PPM_NSIM': '99'})
    assert config.nsim == 9
    with pytest.raises(InputError):
        load_config(path, overrides={'colour': 'red'}, environ={})


def test_missing_covariate_file(config_dir):
    (config_dir / 'pop.asc').unlink()
    with pytest.raises(InputError, match="Input file for covariate 'pop' is missing or unreadable"):
        load_config(str(config_dir / 'analysis.env'), environ={})


def test_invalid_settings(config_dir):
    path = str(config_dir / 'analysis.env')
    for env in ({'SPATIAL_PPM_ALPHA': '0'}, {'SPATIAL_PPM_NSIM': '0'}, {'SPATIAL_PPM_GRID': 'big'},
                {'SPATIAL_PPM_STEPWISE': 'maybe'}, {'SPATIAL_PPM_SEED': '-1'},
                {'SPATIAL_PPM_K_STEPS': '1'}, {'SPATIAL_PPM_K_RMAX': '0'}, {'SPATIAL_PPM_MAX_RADIUS': '-5'}):
        with pytest.raises(InputError):
            load_config(path, environ=env)
    with pytest.raises(InputError):
        load_config(str(config_dir / 'nowhere.env'), environ={})


def test_covariate_spec_validation():
    with pytest.raises(InputError):
        CovariateSpec('a', 'a.csv', 'point-smooth')
    with pytest.raises(InputError):
        CovariateSpec('a', 'a.csv', 'neighbor-count', radius=0.0)
    with pytest.raises(InputError):
        CovariateSpec('a', 'a.csv', 'kriging')
    assert CovariateSpec('a', 'a.csv', 'neighbor-count', radius=20.0).radius == 20.0


def test_parse_pair():
    assert parse_pair('GRID', '64x32') == (64, 32)
    assert parse_pair('GRID', '8X8') == (8, 8)
    with pytest.raises(InputError):
        parse_pair('GRID', '0x4')


def test_grouped_response_source(config_dir):
    (config_dir / 'groups.csv').write_text('group_id,x,y\na,1,1\na,3,1\n')
    path = config_dir / 'grouped.env'
    path.write_text('WINDOW=window.geojson\nGROUPS=groups.csv\nMAX_RADIUS=15\n')
    config = load_config(str(path), environ={})
    assert config.groups == str(config_dir / 'groups.csv')
    assert config.points is None
    assert config.max_radius == 15.0
    with pytest.raises(InputError, match='only one'):
        load_config(str(path), environ={'SPATIAL_PPM_POINTS': 'points.csv'})
