"""Correlated lognormal market paths on a monitoring grid.

Assets follow dS_i = r S_i dt + sigma_i S_i dB_i under the pricing
measure, with corr(B_i, B_l) = rho_il. Simulation uses the factor form

    S_i(t_j) = S_i(0) exp((r - sigma_i^2/2) t_j + sum_m sigma_im W_m(t_j))

where the W_m are independent Brownian drivers and sigma_im =
sigma_i alpha_im for the Cholesky factor alpha of rho. In this form the
Malliavin derivative of a path value with respect to driver k is the
piecewise constant function D_s^k S_i(t_j) = S_i(t_j) sigma_ik
1{s <= t_j}, which is what the weight formulas consume downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarketConfig:
    """Static market description.

    monitoring_times are the strictly increasing averaging dates, the
    last of which must equal the maturity. Volatilities may be zero,
    which degenerates the paths to deterministic forwards.
    """

    spots: np.ndarray
    rate: float
    vols: np.ndarray
    correlation: np.ndarray
    maturity: float
    monitoring_times: np.ndarray

    def __post_init__(self) -> None:
        spots = _frozen_array(self.spots)
        vols = _frozen_array(self.vols)
        corr = _frozen_array(self.correlation)
        times = _frozen_array(self.monitoring_times)
        for name, arr in (("spots", spots), ("vols", vols),
                          ("correlation", corr), ("monitoring_times", times)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "maturity", float(self.maturity))

        m = spots.shape[0]
        if spots.ndim != 1 or m < 1:
            raise ValueError("spots must be a non-empty vector")
        if (spots <= 0).any():
            raise ValueError("spots must be strictly positive")
        if vols.shape != (m,):
            raise ValueError("vols must match the number of assets")
        if (vols < 0).any():
            raise ValueError("vols must be non-negative")
        if corr.shape != (m, m):
            raise ValueError("correlation must be a square matrix over the assets")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise ValueError("correlation must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise ValueError("correlation must have a unit diagonal")
        if self.maturity <= 0:
            raise ValueError("maturity must be positive")
        if times.ndim != 1 or times.shape[0] < 1:
            raise ValueError("monitoring_times must be a non-empty vector")
        if times[0] <= 0 or (np.diff(times) <= 0).any():
            raise ValueError("monitoring_times must be strictly increasing and positive")
        if not np.isclose(times[-1], self.maturity, rtol=0, atol=1e-12):
            raise ValueError("the last monitoring time must equal the maturity")

    @property
    def n_assets(self) -> int:
        return self.spots.shape[0]

    @property
    def n_dates(self) -> int:
        return self.monitoring_times.shape[0]

    @property
    def nominal_dimension(self) -> int:
        return self.n_assets * self.n_dates

    @property
    def grid(self) -> np.ndarray:
        """Monitoring times with the origin prepended."""
        return np.concatenate(([0.0], self.monitoring_times))

    @property
    def interval_lengths(self) -> np.ndarray:
        return np.diff(self.grid)


def cholesky(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, naming the failing leading minor on error."""
    matrix = np.asarray(matrix, dtype=np.float64)
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        for order in range(1, matrix.shape[0] + 1):
            try:
                np.linalg.cholesky(matrix[:order, :order])
            except np.linalg.LinAlgError:
                raise ValueError(
                    "matrix is not positive definite: leading minor of "
                    f"order {order} fails") from None
        raise


def vol_loadings(config: MarketConfig) -> np.ndarray:
    """Factor loadings sigma_im = sigma_i alpha_im, shape (assets, drivers).

    Row i reproduces the covariance structure exactly:
    sum_m sigma_im sigma_lm = sigma_i sigma_l rho_il.
    """
    alpha = cholesky(config.correlation)
    return config.vols[:, None] * alpha


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated trajectories for one replication, path axis first.

    spot_grid[p, i, j] is S_i(t_j); increments[p, m, j] is the
    uncorrelated driver increment over (t_{j-1}, t_j]; w_terminal[p, m]
    is W_m(T); w_time_integral[p, m] approximates int_0^T W_m(s) ds by
    the trapezoid rule on the monitoring grid. The raw standard normal
    draws are retained so correlated reuse (bump runs, pilot phases)
    can rebuild everything bit for bit.
    """

    spot_grid: np.ndarray
    increments: np.ndarray
    w_terminal: np.ndarray
    w_time_integral: np.ndarray
    normal_draws: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.spot_grid.shape[0]


def paths_from_increments(config: MarketConfig, loadings: np.ndarray,
                          increments: np.ndarray,
                          normal_draws: np.ndarray | None = None) -> PathBundle:
    """Build a bundle from uncorrelated driver increments (p, m, j)."""
    t = config.monitoring_times
    dt = config.interval_lengths
    drive = np.einsum("im,pmj->pij", loadings, increments)
    drift = (config.rate - 0.5 * config.vols ** 2)[None, :, None] * t[None, None, :]
    spot_grid = config.spots[None, :, None] * np.exp(np.cumsum(drive, axis=2) + drift)

    w_grid = np.cumsum(increments, axis=2)
    w_prev = np.concatenate([np.zeros_like(w_grid[:, :, :1]), w_grid[:, :, :-1]], axis=2)
    w_time_integral = ((w_prev + w_grid) * 0.5 * dt[None, None, :]).sum(axis=2)

    if normal_draws is None:
        normal_draws = np.empty((increments.shape[0], 0))
    return PathBundle(spot_grid=spot_grid,
                      increments=increments,
                      w_terminal=w_grid[:, :, -1],
                      w_time_integral=w_time_integral,
                      normal_draws=normal_draws)


def simulate_paths(config: MarketConfig, loadings: np.ndarray,
                   normals: np.ndarray,
                   rotation: np.ndarray | None = None) -> PathBundle:
    """Simulate a replication from standard normal draws.

    normals has shape (paths, assets * dates), time-major: the block of
    coordinates (j-1)*M .. j*M - 1 feeds the increments of step j. An
    optional orthogonal rotation is applied to the draws first; being a
    rotation it leaves the path law unchanged while reordering which
    coordinates matter most.
    """
    p, d = normals.shape
    m, n = config.n_assets, config.n_dates
    if d != m * n:
        raise ValueError(
            f"normal draws have dimension {d}, expected assets*dates = {m * n}")
    eta = normals @ rotation.T if rotation is not None else normals
    sqrt_dt = np.sqrt(config.interval_lengths)
    increments = eta.reshape(p, n, m).transpose(0, 2, 1) * sqrt_dt[None, None, :]
    return paths_from_increments(config, loadings, increments, normal_draws=normals)


def malliavin_derivative_samples(bundle: PathBundle, loadings: np.ndarray,
                                 component: int) -> np.ndarray:
    """Per-interval samples of D_s^k S_i(t_j).

    Returns (paths, assets, dates, intervals) with entry [p, i, j, l] =
    S_i(t_j) sigma_ik 1{l <= j}: the derivative is constant on each
    monitoring interval and vanishes after t_j. Dense output, meant for
    validation on small grids; the weight formulas use the factorized
    closed forms instead.
    """
    spot = bundle.spot_grid
    n = spot.shape[2]
    mask = (np.arange(n)[None, :] <= np.arange(n)[:, None]).astype(np.float64)
    return np.einsum("pij,i,jl->pijl", spot, loadings[:, component], mask)
