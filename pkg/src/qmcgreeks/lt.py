"""Dimension-reducing rotation of the normal draws.

Quasi-random sequences spend their quality on leading coordinates, so
the draws are rotated by an orthogonal matrix chosen to concentrate the
variability of the payoff there. Column k maximizes the squared
directional derivative of a smooth per-path driver with respect to the
k-th transformed coordinate, subject to orthonormality with the columns
already fixed; the optimum is the normalized projection of the driver
gradient onto the complement of those columns.

The driver is the running average for fixed-strike payoffs (including
the digital, whose indicator is driven by the same variable), the
average minus the terminal basket mean for the floating strike, and the
active branch of max(average, terminal mean) for best_of. Gradients are
taken at an expansion path: the one generated by setting each already
transformed coordinate to one and the rest to zero. None of this
depends on the strike level, so one rotation serves a whole strike
sweep of the same payoff kind.

Columns whose projected gradient vanishes, which happens when the
volatility is degenerate, fall back to completing the basis from
coordinate vectors; the build reports how many did.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import MarketConfig, simulate_paths, vol_loadings
from .payoffs import PayoffSpec

_DEGENERATE_FRACTION = 1e-14


@dataclass(frozen=True, eq=False)
class LtBuild:
    """Orthogonal rotation with build diagnostics.

    first_objective is the squared gradient norm captured by the first
    column; fallback_columns counts columns completed from coordinate
    vectors instead of gradients.
    """

    matrix: np.ndarray
    first_objective: float
    fallback_columns: int


def _branch_coefficients(spec: PayoffSpec, config: MarketConfig,
                         weights: np.ndarray, spot: np.ndarray) -> np.ndarray:
    """Coefficient matrix c with driver = sum_ij c_ij S_i(t_j)."""
    m, n = config.n_assets, config.n_dates
    terminal = np.zeros((m, n))
    terminal[:, -1] = 1.0 / m
    if spec.kind in ("call", "digital"):
        return weights
    if spec.kind == "floating":
        return weights - terminal
    average = float(np.einsum("ij,ij->", spot[0], weights))
    terminal_mean = float(spot[0, :, -1].mean())
    return weights if average >= terminal_mean else terminal


def driver_gradient(config: MarketConfig, loadings: np.ndarray,
                    coeff: np.ndarray, spot: np.ndarray) -> np.ndarray:
    """Gradient of sum_ij c_ij S_i(t_j) in the normal draws, flat (d,).

    Coordinate (j-1)*M + m, time-major, carries sqrt(dt_j) times the
    loading-weighted suffix sum of c_il S_i(t_l) over dates l >= j:
    moving an increment at step j moves every later spot observation.
    """
    suffix = np.cumsum((coeff * spot[0])[:, ::-1], axis=1)[:, ::-1]
    per_step = np.einsum("im,in->nm", loadings, suffix)
    per_step *= np.sqrt(config.interval_lengths)[:, None]
    return per_step.reshape(-1)


def build_lt_matrix(config: MarketConfig, spec: PayoffSpec,
                    loadings: np.ndarray | None = None) -> LtBuild:
    """Greedy column-by-column construction of the rotation."""
    if loadings is None:
        loadings = vol_loadings(config)
    m, n = config.n_assets, config.n_dates
    d = m * n
    weights = spec.weight_matrix(m, n)
    matrix = np.zeros((d, d))
    fallback = 0
    first_objective = 0.0
    for k in range(d):
        done = matrix[:, :k]
        eta_hat = done.sum(axis=1)[None, :]
        bundle = simulate_paths(config, loadings, eta_hat)
        coeff = _branch_coefficients(spec, config, weights, bundle.spot_grid)
        gradient = driver_gradient(config, loadings, coeff, bundle.spot_grid)
        # two projection passes keep the columns orthonormal at scale
        residual = gradient - done @ (done.T @ gradient)
        residual -= done @ (done.T @ residual)
        norm = float(np.linalg.norm(residual))
        if norm <= _DEGENERATE_FRACTION * max(1.0, float(np.linalg.norm(gradient))):
            column = _basis_completion(done)
            fallback += 1
        else:
            column = residual / norm
        matrix[:, k] = column
        if k == 0:
            first_objective = float(gradient @ column) ** 2
    matrix.setflags(write=False)
    return LtBuild(matrix=matrix, first_objective=first_objective,
                   fallback_columns=fallback)


def _basis_completion(done: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to the fixed columns, from the coordinate
    direction they cover least."""
    leftover = 1.0 - (done ** 2).sum(axis=1)
    pick = int(np.argmax(leftover))
    column = -done @ done[pick]
    column[pick] += 1.0
    column -= done @ (done.T @ column)
    return column / np.linalg.norm(column)
