"""Arithmetic-average basket payoffs and their pathwise delta pieces.

Four payoff kinds share the running average m = sum_ij w_ij S_i(t_j):

* ``call``            (m - K)^+            fixed strike K
* ``floating``        (m - S_bar(T)/M)^+   strike is the terminal basket mean
* ``digital``         1{m >= K}            cash-or-nothing, ties pay
* ``best_of``         (max(m, S_bar(T)/M) - K)^+

where S_bar(T)/M is the equally weighted terminal spot average. The
floating and best_of kinds force uniform averaging weights w_ij =
1/(M N); the fixed-strike kinds accept any weight matrix.

Every per-path quantity needed by both the estimators and the bump
reruns is computed once here: the average, the floating strike, and the
per-component gradients d(average)/d(log x_k) and d(strike)/d(log x_k),
from which spot deltas follow by dividing out x_k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketConfig, PathBundle

KINDS = ("call", "floating", "digital", "best_of")
_FIXED_STRIKE_KINDS = ("call", "digital", "best_of")


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    """Payoff kind, strike, and averaging weights.

    weights is (assets, dates), non-negative, summing to one. Passing
    ``None`` selects the uniform matrix; the floating and best_of kinds
    accept nothing else because their strike legs are defined through
    the equally weighted terminal average.
    """

    kind: str
    strike: float
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "strike", float(self.strike))
        if self.kind in _FIXED_STRIKE_KINDS and self.strike <= 0:
            raise ValueError("fixed-strike payoffs need a positive strike")
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64)
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
            if self.kind not in ("call", "digital"):
                raise ValueError(
                    f"{self.kind} payoffs use uniform weights; leave weights unset")
            if w.ndim != 2:
                raise ValueError("weights must be a (assets, dates) matrix")
            if (w < 0).any():
                raise ValueError("weights must be non-negative")
            if not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-10):
                raise ValueError("weights must sum to one")

    def weight_matrix(self, n_assets: int, n_dates: int) -> np.ndarray:
        if self.weights is None:
            return np.full((n_assets, n_dates), 1.0 / (n_assets * n_dates))
        if self.weights.shape != (n_assets, n_dates):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match "
                f"(assets, dates) = ({n_assets}, {n_dates})")
        return np.asarray(self.weights)


@dataclass(frozen=True, eq=False)
class PayoffEval:
    """Per-path aggregates for one replication.

    average_grad[p, k] = x_k * d(average)/d(x_k), the part of the
    average carried by asset k; likewise strike_grad for the floating
    strike leg (zero for fixed-strike kinds). Spot deltas divide these
    by x_k, and multiplicative bump reruns rescale them in place of
    re-simulating paths.
    """

    value: np.ndarray
    average: np.ndarray
    floating_strike: np.ndarray
    average_grad: np.ndarray
    strike_grad: np.ndarray


def payoff_value_from_aggregates(kind: str, strike: float, average: np.ndarray,
                                 floating_strike: np.ndarray) -> np.ndarray:
    """Payoff from the two path aggregates; shared with bump reruns."""
    if kind == "call":
        return np.maximum(average - strike, 0.0)
    if kind == "floating":
        return np.maximum(average - floating_strike, 0.0)
    if kind == "digital":
        return (average >= strike).astype(np.float64)
    if kind == "best_of":
        return np.maximum(np.maximum(average, floating_strike) - strike, 0.0)
    raise ValueError(f"unknown payoff kind {kind!r}")


def evaluate(spec: PayoffSpec, config: MarketConfig, bundle: PathBundle) -> PayoffEval:
    w = spec.weight_matrix(config.n_assets, config.n_dates)
    spot = bundle.spot_grid
    average = np.einsum("pij,ij->p", spot, w)
    average_grad = np.einsum("pij,ij->pi", spot, w)
    if spec.kind in ("floating", "best_of"):
        m = config.n_assets
        floating_strike = spot[:, :, -1].mean(axis=1)
        strike_grad = spot[:, :, -1] / m
    else:
        floating_strike = np.zeros(average.shape[0])
        strike_grad = np.zeros_like(average_grad)
    value = payoff_value_from_aggregates(spec.kind, spec.strike, average, floating_strike)
    return PayoffEval(value=value, average=average, floating_strike=floating_strike,
                      average_grad=average_grad, strike_grad=strike_grad)


def discount(config: MarketConfig) -> float:
    return math.exp(-config.rate * config.maturity)
