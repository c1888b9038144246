import numpy as np
import pytest

from qmcgreeks import lt
from qmcgreeks.market import MarketConfig, simulate_paths, vol_loadings
from qmcgreeks.payoffs import PayoffSpec


def _config(n_assets=2, n_dates=3, vols=(0.2, 0.4)):
    correlation = np.full((n_assets, n_assets), 0.5)
    np.fill_diagonal(correlation, 1.0)
    return MarketConfig(spots=np.full(n_assets, 100.0), rate=0.05,
                        vols=np.asarray(vols), correlation=correlation,
                        maturity=1.0,
                        monitoring_times=np.arange(1, n_dates + 1) / n_dates)


@pytest.mark.parametrize("kind,strike", [("call", 100.0), ("floating", 0.0),
                                         ("digital", 100.0), ("best_of", 100.0)])
def test_columns_are_orthonormal(kind, strike):
    config = _config()
    build = lt.build_lt_matrix(config, PayoffSpec(kind=kind, strike=strike))
    d = config.nominal_dimension
    assert build.matrix.shape == (d, d)
    assert np.abs(build.matrix.T @ build.matrix - np.eye(d)).max() < 1e-12


def test_build_is_deterministic_and_strike_free():
    config = _config()
    a = lt.build_lt_matrix(config, PayoffSpec(kind="call", strike=90.0))
    b = lt.build_lt_matrix(config, PayoffSpec(kind="call", strike=110.0))
    assert np.array_equal(a.matrix, b.matrix)
    assert a.first_objective == b.first_objective


def test_first_column_follows_the_driver_gradient():
    config = _config()
    loadings = vol_loadings(config)
    spec = PayoffSpec(kind="call", strike=100.0)
    build = lt.build_lt_matrix(config, spec)
    d = config.nominal_dimension
    bundle = simulate_paths(config, loadings, np.zeros((1, d)))
    weights = spec.weight_matrix(config.n_assets, config.n_dates)
    gradient = lt.driver_gradient(config, loadings, weights, bundle.spot_grid)
    direction = gradient / np.linalg.norm(gradient)
    assert np.abs(build.matrix[:, 0] - direction).max() < 1e-12
    assert build.first_objective == pytest.approx(np.dot(gradient, gradient))
    assert build.fallback_columns == 0


def test_driver_gradient_matches_finite_differences():
    config = _config()
    loadings = vol_loadings(config)
    d = config.nominal_dimension
    rng = np.random.default_rng(6)
    eta = rng.standard_normal((1, d))
    coeff = rng.uniform(0.1, 1.0, size=(config.n_assets, config.n_dates))

    def functional(point):
        bundle = simulate_paths(config, loadings, point)
        return float((coeff[None] * bundle.spot_grid).sum())

    spot = simulate_paths(config, loadings, eta).spot_grid
    gradient = lt.driver_gradient(config, loadings, coeff, spot)
    h = 1e-6
    for p in range(d):
        up, down = eta.copy(), eta.copy()
        up[0, p] += h
        down[0, p] -= h
        fd = (functional(up) - functional(down)) / (2.0 * h)
        assert gradient[p] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_zero_volatility_falls_back_to_identity():
    config = _config(vols=(0.0, 0.0))
    build = lt.build_lt_matrix(config, PayoffSpec(kind="call", strike=100.0))
    d = config.nominal_dimension
    assert build.fallback_columns == d
    assert np.array_equal(build.matrix, np.eye(d))
    assert build.first_objective == 0.0


def test_best_of_fallbacks_keep_orthonormality():
    # the terminal-mean branch spans only an assets-sized subspace, so
    # late columns can need basis completion; the matrix must stay clean
    config = _config(n_assets=3, n_dates=4, vols=(0.1, 0.25, 0.4))
    build = lt.build_lt_matrix(config, PayoffSpec(kind="best_of", strike=100.0))
    d = config.nominal_dimension
    assert np.abs(build.matrix.T @ build.matrix - np.eye(d)).max() < 1e-12
