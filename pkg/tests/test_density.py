import json

import numpy as np
import pytest

from active_stats.density import (
    CondCdfEstimate,
    GridDensity,
    beta_null_density,
    density_lower_bound,
    fit_conditional_cdf,
    fit_null_density,
    gaussian_proxy_density,
    gaussian_proxy_null_density,
    gaussian_reciprocal_proxy_density,
    inverse_conditional_cdf,
)
from active_stats.errors import (
    DomainError,
    EstimationError,
    NumericalError,
    ParameterError,
)
from active_stats.normal import normal_cdf, normal_quantile, normal_sf


def test_fit_uniform_samples_near_flat():
    rng = np.random.default_rng(1)
    density = fit_null_density(rng.uniform(size=10_000), n_bins=20)
    assert np.all(np.abs(density.bin_values - 1.0) < 0.1)
    assert density.integral() == pytest.approx(1.0, abs=1e-9)


def test_fit_degenerate_samples_floor_and_normalize():
    density = fit_null_density(np.full(200, 0.5), n_bins=20, floor_eps=1e-3)
    values = density.bin_values
    assert np.sum(values > 1.0) == 1
    off_peak = values[values < 1.0]
    assert np.allclose(off_peak, 1e-3)
    assert density.integral() == pytest.approx(1.0, abs=1e-9)


def test_fit_beta_half_shape():
    rng = np.random.default_rng(1)
    density = fit_null_density(rng.beta(0.5, 1.0, size=10_000), n_bins=20)
    values = density.bin_values
    assert values[0] > values[-1]
    # analytic density 0.5 / sqrt(q) is ~0.506 averaged over the last bin
    assert values[-1] == pytest.approx(0.5, abs=0.1)


def test_fit_rejects_small_samples():
    with pytest.raises(EstimationError):
        fit_null_density(np.linspace(0, 1, 49))


def test_grid_density_eval_and_bound():
    density = GridDensity(np.array([0.0, 0.25, 0.5, 1.0]),
                          np.array([0.4, 1.6, 1.0]))
    assert density.eval(0.1) == 0.4
    assert density.eval(0.25) == 1.6       # right-continuous at edges
    assert density.eval(1.0) == 1.0
    assert density_lower_bound(density, 0.0) == 0.4
    # only the middle and last bins intersect [0.3, 0.7]
    assert density_lower_bound(density, 0.3) == 1.0


def test_grid_density_json_round_trip():
    rng = np.random.default_rng(2)
    density = fit_null_density(rng.uniform(size=500), n_bins=7)
    again = GridDensity.from_json(density.to_json())
    assert np.array_equal(again.bin_edges, density.bin_edges)
    assert np.array_equal(again.bin_values, density.bin_values)


def test_lower_bound_flat_and_beta():
    assert density_lower_bound(lambda q: np.ones_like(q), 0.0) == 1.0
    beta = beta_null_density(0.5, 1.0)
    assert beta.lower_bound == pytest.approx(0.5, abs=1e-6)


def test_lower_bound_rejects_nonpositive():
    with pytest.raises(NumericalError):
        density_lower_bound(lambda q: np.asarray(q) - 0.5, 0.0)
    with pytest.raises(ParameterError):
        density_lower_bound(lambda q: np.ones_like(q), 0.7)


def test_gaussian_proxy_density_values():
    assert gaussian_proxy_density(0.3, 0.0) == pytest.approx(1.0)
    assert gaussian_proxy_density(0.5, 0.3) == pytest.approx(np.exp(0.045),
                                                             rel=1e-12)
    q_half_mu = float(normal_sf(0.15))  # where the exponent vanishes
    assert gaussian_proxy_density(q_half_mu, 0.3) == pytest.approx(1.0,
                                                                   rel=1e-10)
    for bad in (0.0, 1.0):
        with pytest.raises(DomainError):
            gaussian_proxy_density(bad, 0.3)


def test_gaussian_log_linear_identity():
    mu0 = 0.3
    grid = np.linspace(1e-4, 1 - 1e-4, 1000)
    log_f = np.log(gaussian_proxy_density(grid, mu0))
    expected = -mu0 * normal_quantile(1.0 - grid) + mu0 * mu0 / 2.0
    assert np.max(np.abs(log_f - expected)) < 1e-10


def test_gaussian_reciprocal_variant():
    grid = np.linspace(1e-3, 1 - 1e-3, 101)
    product = (gaussian_proxy_density(grid, 0.3)
               * gaussian_reciprocal_proxy_density(grid, 0.3))
    assert np.max(np.abs(product - 1.0)) < 1e-10


def test_gaussian_null_density_factory():
    dens = gaussian_proxy_null_density(0.3, 1e-3)
    # certified bound: the change-of-variables density is decreasing in q,
    # so the minimum sits at q = 1 - delta
    expected = float(gaussian_reciprocal_proxy_density(1.0 - 1e-3, 0.3))
    assert dens.lower_bound == pytest.approx(expected, rel=1e-6)
    # floored evaluation never dips below the certified bound
    assert float(dens.eval(0.999999)) >= dens.lower_bound
    printed = gaussian_proxy_null_density(0.3, 1e-3, variant="as-printed")
    assert printed.lower_bound == pytest.approx(
        float(gaussian_proxy_density(1e-3, 0.3)), rel=1e-6)


def test_normal_helpers_against_mpmath():
    import mpmath

    with mpmath.workdps(50):
        for x in np.linspace(-8.0, 8.0, 33):
            exact = float(mpmath.ncdf(x))
            assert abs(float(normal_cdf(x)) - exact) < 1e-12
        for p in np.linspace(1e-10, 1 - 1e-10, 41):
            exact = float(mpmath.sqrt(2)
                          * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
            assert abs(float(normal_quantile(p)) - exact) < 1e-10


def test_conditional_cdf_independent_pairs_close_to_identity():
    rng = np.random.default_rng(3)
    n = 20_000
    pairs = np.column_stack([rng.uniform(size=n), rng.uniform(size=n)])
    est = fit_conditional_cdf(pairs)
    # DKW: every bin holds >= n / 50 points, sup error < ~3 / sqrt(count)
    count_per_bin = n / (est.q_bin_edges.size - 1)
    tol = 3.0 / np.sqrt(count_per_bin)
    for row in est.cdf_table:
        assert np.max(np.abs(row - est.p_grid)) < tol


def test_conditional_cdf_comonotone_steps():
    q = np.linspace(0.01, 0.99, 2000)
    pairs = np.column_stack([q, q])
    est = fit_conditional_cdf(pairs, n_qbins=10)
    bin_width = 1.0 / 10
    for u in (0.2, 0.5, 0.8):
        p = est.inverse(u, 0.55)
        assert abs(p - 0.55) < bin_width + 0.02


def test_conditional_cdf_round_trip():
    rng = np.random.default_rng(4)
    pairs = np.column_stack([rng.uniform(size=5000), rng.uniform(size=5000)])
    est = fit_conditional_cdf(pairs)
    for q in (0.1, 0.5, 0.9):
        for u in (0.05, 0.3, 0.62, 0.97):
            p = est.inverse(u, q)
            assert est.eval(p, q) == pytest.approx(u, abs=1e-9)


def test_inverse_conditional_cdf_identity_like():
    # one q-bin, exactly uniform p grid as data
    pairs = np.column_stack([np.full(200, 0.5),
                             np.linspace(0.0025, 0.9975, 200)])
    est = fit_conditional_cdf(pairs, n_qbins=1)
    for u in (0.0, 0.25, 0.5, 1.0):
        assert inverse_conditional_cdf(est, 0.5, u) == pytest.approx(u, abs=0.01)


def test_conditional_cdf_monotone_rows_and_json():
    rng = np.random.default_rng(5)
    pairs = np.column_stack([rng.beta(0.5, 1.0, 3000), rng.uniform(size=3000)])
    est = fit_conditional_cdf(pairs)
    assert np.all(np.diff(est.cdf_table, axis=1) >= 0.0)
    assert est.cdf_table[:, 0].max() == 0.0
    assert est.cdf_table[:, -1].min() == 1.0
    again = CondCdfEstimate.from_json(est.to_json())
    assert np.array_equal(again.cdf_table, est.cdf_table)
    payload = json.loads(est.to_json())
    assert set(payload) == {"q_bin_edges", "p_grid", "cdf_table"}


def test_conditional_cdf_insufficient_data():
    with pytest.raises(EstimationError):
        fit_conditional_cdf(np.random.default_rng(0).uniform(size=(10, 2)))
