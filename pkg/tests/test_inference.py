import numpy as np
import pytest

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.geometry import Window
from spatial_ppm.models.inference import (
    TestResult,
    TranslationCorrection,
    class_distribution,
    default_r_grid,
    envelope_r_grid,
    k_envelope,
    ks_test_covariate,
    pointwise_envelope,
    quadrat_test,
    ripley_k,
)
from spatial_ppm.models.pattern import PointPattern
from spatial_ppm.models.raster import GridSpec, build_grid
from spatial_ppm.models.sim import RngSeed, sim_cluster, sim_csr


def test_quadrat_uniform_counts_give_zero_statistic(unit_square):
    xy = np.array([[x, y] for x in (0.25, 0.75) for y in (0.25, 0.75)] * 5)
    result = quadrat_test(PointPattern(xy, unit_square), 2, 2)
    assert result.statistic == pytest.approx(0.0)
    assert result.df == 3
    assert result.p_value == pytest.approx(1.0)


def test_quadrat_concentrated_counts(unit_square):
    rng = np.random.default_rng(0)
    xy = np.column_stack([rng.uniform(0, 1, 40), rng.uniform(0, 0.5, 40)])
    xy[:20, 0] = rng.uniform(0, 0.5, 20)
    xy[20:, 0] = rng.uniform(0.5, 1, 20)
    result = quadrat_test(PointPattern(xy, unit_square), 2, 2)
    assert result.statistic == pytest.approx(40.0)
    assert result.df == 3
    assert result.p_value < 1e-7
    assert sorted(result.details['observed']) == [0.0, 0.0, 20.0, 20.0]


def test_quadrat_expected_follows_window_area(l_window):
    # the upper-right quadrat lies outside the window and expects nothing
    p = sim_csr(l_window, 300, 4)
    result = quadrat_test(p, 2, 2)
    assert result.df == 2
    assert sum(result.details['expected']) == pytest.approx(300.0)


def test_quadrat_needs_points(unit_square):
    with pytest.raises(InputError):
        quadrat_test(PointPattern(np.empty((0, 2)), unit_square), 2, 2)


def test_quadrat_calibration_under_csr(unit_square):
    grid = build_grid(GridSpec(unit_square, 64, 64))
    rejected = sum(quadrat_test(sim_csr(unit_square, 300, s), 4, 4, grid=grid).p_value < 0.05
                   for s in range(200))
    assert 4 <= rejected <= 18


def test_ks_constant_covariate(unit_square, unit_grid):
    p = sim_csr(unit_square, 50, 3)
    result = ks_test_covariate(p, unit_grid.filled(2.0))
    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(1.0)


def test_ks_two_cell_covariate(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 1))
    cov = grid.with_values(np.array([[0.0, 1.0]]))
    result = ks_test_covariate(PointPattern(np.array([[0.25, 0.5]]), unit_square), cov)
    assert result.statistic == pytest.approx(0.5)
    assert result.n_used == 1


def test_ks_drops_points_without_value(unit_square):
    grid = build_grid(GridSpec(unit_square, 2, 1))
    cov = grid.with_values(np.array([[0.0, np.nan]]))
    p = PointPattern(np.array([[0.25, 0.5], [0.75, 0.5], [0.8, 0.1]]), unit_square)
    result = ks_test_covariate(p, cov)
    assert result.n_used == 1
    assert result.n_dropped == 2


def test_ks_detects_covariate_dependence(unit_square):
    grid = build_grid(GridSpec(unit_square, 256, 1))
    xs, _ = grid.cell_centers()
    ramp = grid.with_values(xs[None, :])
    rng = np.random.default_rng(9)
    # density 2x on the unit interval
    xy = np.column_stack([np.sqrt(rng.uniform(size=200)), rng.uniform(size=200)])
    assert ks_test_covariate(PointPattern(xy, unit_square), ramp).p_value < 1e-3


def test_ks_calibration_under_csr(unit_square):
    grid = build_grid(GridSpec(unit_square, 1024, 1))
    xs, _ = grid.cell_centers()
    ramp = grid.with_values(xs[None, :])
    rejected = sum(ks_test_covariate(sim_csr(unit_square, 300, s), ramp).p_value < 0.05 for s in range(200))
    assert 4 <= rejected <= 18


def test_class_distribution(unit_square):
    grid = build_grid(GridSpec(unit_square, 4, 1))
    cov = grid.with_values(np.array([[1.0, 2.0, 3.0, 4.0]]))
    p = PointPattern(np.array([[0.1, 0.5], [0.2, 0.5], [0.9, 0.5]]), unit_square)
    table = class_distribution(p, cov, [0.0, 2.0, 4.0])
    assert list(table['points']) == [2, 1]
    assert list(table['pixels']) == [2, 2]
    assert table['percent_points'].sum() == pytest.approx(100.0)
    assert list(table['percent_pixels']) == [50.0, 50.0]


def test_translation_weight_of_zero_shift(unit_square, unit_grid):
    correction = TranslationCorrection(unit_grid)
    assert correction.area == pytest.approx(1.0)
    assert correction.weights([[0.0, 0.0]])[0] == pytest.approx(1.0)
    assert correction.weights([[0.5, 0.0]])[0] == pytest.approx(2.0)
    assert correction.weights([[1.5, 0.0]])[0] == 0.0


def test_ripley_two_points():
    window = Window.rectangle(0, 100, 0, 100)
    p = PointPattern(np.array([[50.0, 50.0], [51.0, 50.0]]), window)
    k = ripley_k(p, [0.0, 0.5, 2.0])
    assert k.khat[0] == 0.0
    assert k.khat[1] == 0.0
    # one ordered pair each way, weighted by 100^2 / (99 * 100)
    assert k.khat[2] == pytest.approx(10000.0 / 2 * 10000.0 / 9900.0, rel=1e-3)


def test_ripley_is_non_decreasing(irregular_window):
    k = ripley_k(sim_csr(irregular_window, 200, 2))
    assert np.all(np.diff(k.khat) >= 0)
    assert k.r[0] == 0.0
    assert k.r[-1] == pytest.approx(default_r_grid(irregular_window)[-1])


def test_ripley_csr_near_theory(unit_square):
    r = np.array([0.05, 0.1])
    estimates = np.array([ripley_k(sim_csr(unit_square, 500, s), r).khat for s in range(50)])
    np.testing.assert_allclose(estimates.mean(axis=0), np.pi * r ** 2, rtol=0.1)


def test_ripley_validation(unit_square):
    p = sim_csr(unit_square, 10, 0)
    with pytest.raises(InputError):
        ripley_k(PointPattern(np.array([[0.5, 0.5]]), unit_square))
    with pytest.raises(InputError):
        ripley_k(p, [0.2, 0.1])
    with pytest.raises(InputError):
        ripley_k(p, [0.0, 5.0])


def test_pointwise_envelope():
    lower, upper = pointwise_envelope([[1.0, 4.0], [3.0, 2.0], [2.0, 3.0]])
    np.testing.assert_array_equal(lower, [1.0, 2.0])
    np.testing.assert_array_equal(upper, [3.0, 4.0])


def test_envelope_radius_grid(unit_square):
    np.testing.assert_allclose(envelope_r_grid(unit_square), [0.0, 0.1])
    np.testing.assert_allclose(envelope_r_grid(unit_square, rmax=0.2, steps=3), [0.0, 0.1, 0.2])
    assert len(default_r_grid(unit_square)) == 101
    with pytest.raises(InputError):
        envelope_r_grid(unit_square, steps=1)
    with pytest.raises(InputError):
        envelope_r_grid(unit_square, rmax=0.0)


def test_csr_patterns_stay_inside_envelope(unit_square):
    inside = 0
    for seed in range(50):
        p = sim_csr(unit_square, 200, seed)
        envelope, _ = k_envelope(p, 39, seed=seed)
        inside += envelope.verdict == 'inside'
    assert inside >= 45


def test_clustered_patterns_leave_envelope(unit_square):
    for seed in range(20):
        p = sim_cluster(unit_square, 50, 10, 0.01, RngSeed(seed, 100))
        envelope, result = k_envelope(p, 39, seed=seed)
        assert envelope.verdict == 'outside'
        assert result.p_value == pytest.approx(2 / 40)
        assert result.details['exit_radii'] == [pytest.approx(0.1)]


def test_envelope_independent_of_threads(unit_square):
    p = sim_csr(unit_square, 60, 8)
    a, _ = k_envelope(p, 10, seed=4, threads=1)
    b, _ = k_envelope(p, 10, seed=4, threads=4)
    np.testing.assert_array_equal(a.lower, b.lower)
    np.testing.assert_array_equal(a.upper, b.upper)


def test_result_rejects_bad_p_value():
    with pytest.raises(InputError):
        TestResult('x', 1.0, 1.5)
