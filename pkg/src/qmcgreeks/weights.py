"""Integration-by-parts delta weights for path-average payoffs.

A spot delta of E[psi] moves the differentiation off the (possibly
discontinuous) payoff and onto the path law: the derivative becomes
E[psi * weight] for a Skorohod-integral weight built from the path.
Every family here shares one algebraic skeleton. Writing g for the
pathwise derivative of the averaged quantity, d for the time integral
of its Malliavin derivative, and gi, di for the corresponding
time-integrated derivatives of g and d themselves, the weight is

    (g / d) * (W_k(T) + di / d) - gi / d

with W_k(T) the terminal value of driver k. Fixed-strike and
floating-strike averages differ only in which aggregates feed g, d,
gi, di; the digital replaces the outer payoff factor by a Laplace
kernel around the strike; the two-variable best_of payoff needs a
genuine two-dimensional inversion and is assembled from first-order
jets (value plus per-interval Malliavin derivative samples) with exact
product and quotient rules.

Localization splits a kinked payoff into a smooth pathwise part and a
remainder handled by the weight, which is where most of the variance
reduction comes from; the split is exact in expectation for any
half-width. Adaptive rules pick the half-width (and the digital kernel
scale) from pilot-sample variances.

Denominators vanish only on a null set, but finite arithmetic can
realize them. Paths with a tiny denominator are flagged for rejection
unless the matching numerator blocks vanish too, in which case the
weight is an honest zero (a floating strike over a single asset and
date, say, where the payoff is identically zero).
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .market import MarketConfig, PathBundle

DEGENERATE_FRACTION = 1e-12


# ---------------------------------------------------------------------------
# first-order jets


@dataclass(frozen=True, eq=False)
class MalliavinJet:
    """Path functional with its Malliavin derivative samples.

    value has shape (paths,). samples has shape (paths, intervals):
    the derivative with respect to the chosen driver is constant on
    each monitoring interval, so one sample per interval determines it.
    Arithmetic follows the exact product and quotient rules, which is
    what makes chained expressions like (a*d - b*c) / e differentiable
    without symbolic work.
    """

    value: np.ndarray
    samples: np.ndarray

    def _lift(self, other) -> "MalliavinJet":
        if isinstance(other, MalliavinJet):
            return other
        const = np.broadcast_to(np.asarray(other, dtype=np.float64), self.value.shape)
        return MalliavinJet(value=const, samples=np.zeros_like(self.samples))

    def __add__(self, other) -> "MalliavinJet":
        o = self._lift(other)
        return MalliavinJet(self.value + o.value, self.samples + o.samples)

    __radd__ = __add__

    def __sub__(self, other) -> "MalliavinJet":
        o = self._lift(other)
        return MalliavinJet(self.value - o.value, self.samples - o.samples)

    def __rsub__(self, other) -> "MalliavinJet":
        return self._lift(other).__sub__(self)

    def __mul__(self, other) -> "MalliavinJet":
        o = self._lift(other)
        return MalliavinJet(self.value * o.value,
                            self.samples * o.value[:, None]
                            + self.value[:, None] * o.samples)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "MalliavinJet":
        o = self._lift(other)
        return MalliavinJet(self.value / o.value,
                            (self.samples * o.value[:, None]
                             - self.value[:, None] * o.samples)
                            / o.value[:, None] ** 2)

    def __rtruediv__(self, other) -> "MalliavinJet":
        return self._lift(other).__truediv__(self)

    def __neg__(self) -> "MalliavinJet":
        return MalliavinJet(-self.value, -self.samples)

    def time_integral(self, interval_lengths: np.ndarray) -> np.ndarray:
        """int_0^T D_s f ds for the piecewise-constant samples."""
        return self.samples @ interval_lengths

    def weighted_time_integral(self, interval_moments: np.ndarray) -> np.ndarray:
        """int_0^T s D_s f ds; pass (t_l^2 - t_{l-1}^2)/2 per interval."""
        return self.samples @ interval_moments


def lincomb_jet(spot_grid: np.ndarray, loadings: np.ndarray,
                coeff: np.ndarray, component: int) -> MalliavinJet:
    """Jet of sum_ij c_ij S_i(t_j) with respect to driver `component`.

    The derivative sample on interval l collects every observation at
    or after t_l: samples[:, l] = sum_i sigma_ik sum_{j >= l} c_ij
    S_i(t_j), a suffix sum over dates.
    """
    weighted = coeff[None, :, :] * spot_grid
    value = weighted.sum(axis=(1, 2))
    suffix = np.cumsum(weighted[:, :, ::-1], axis=2)[:, :, ::-1]
    samples = np.einsum("i,pij->pj", loadings[:, component], suffix)
    return MalliavinJet(value=value, samples=samples)


# ---------------------------------------------------------------------------
# weight blocks shared by the single-variable families


@dataclass(frozen=True, eq=False)
class SkorohodBlocks:
    """Per-path ingredients of one component's weight, all shape (paths,).

    grad: pathwise spot derivative of the averaged quantity.
    denom: time integral of its Malliavin derivative.
    grad_int / denom_int: time-integrated derivatives of those two.
    """

    grad: np.ndarray
    denom: np.ndarray
    grad_int: np.ndarray
    denom_int: np.ndarray


@dataclass(frozen=True, eq=False)
class PathWeights:
    """Weight values with a rejection mask for degenerate paths."""

    values: np.ndarray
    rejected: np.ndarray


def fixed_strike_blocks(config: MarketConfig, loadings: np.ndarray,
                        weights: np.ndarray, bundle: PathBundle,
                        component: int) -> SkorohodBlocks:
    spot = bundle.spot_grid
    t = config.monitoring_times
    x_k = config.spots[component]
    col = loadings[:, component]
    own = loadings[component, component]
    row = weights[component]
    own_spot = spot[:, component, :]
    grad = own_spot @ row / x_k
    denom = np.einsum("pij,ij,i->p", spot, weights * t[None, :], col)
    grad_int = (own_spot * row) @ t * (own / x_k)
    denom_int = np.einsum("pij,ij,i->p", spot, weights * (t * t)[None, :], col * col)
    return SkorohodBlocks(grad=grad, denom=denom, grad_int=grad_int,
                          denom_int=denom_int)


def floating_strike_blocks(config: MarketConfig, loadings: np.ndarray,
                           weights: np.ndarray, bundle: PathBundle,
                           component: int) -> SkorohodBlocks:
    """Fixed-strike blocks minus the terminal-mean strike leg."""
    base = fixed_strike_blocks(config, loadings, weights, bundle, component)
    terminal = bundle.spot_grid[:, :, -1]
    m = config.n_assets
    big_t = config.maturity
    x_k = config.spots[component]
    col = loadings[:, component]
    own = loadings[component, component]
    grad = terminal[:, component] / (m * x_k)
    denom = terminal @ col * (big_t / m)
    grad_int = terminal[:, component] * (big_t * own / (m * x_k))
    denom_int = terminal @ (col * col) * (big_t * big_t / m)
    return SkorohodBlocks(grad=base.grad - grad, denom=base.denom - denom,
                          grad_int=base.grad_int - grad_int,
                          denom_int=base.denom_int - denom_int)


def _scaled_tolerance(values: np.ndarray) -> float:
    return DEGENERATE_FRACTION * float(np.mean(np.abs(values)))


def _degenerate_split(blocks: SkorohodBlocks) -> tuple[np.ndarray, np.ndarray]:
    """Degenerate-denominator mask and its rejected subset.

    A degenerate path is kept (with weight zero) only when grad and
    grad_int vanish with the denominator, making the true weight zero.
    """
    degenerate = np.abs(blocks.denom) <= _scaled_tolerance(blocks.denom)
    harmless = (degenerate
                & (np.abs(blocks.grad) <= _scaled_tolerance(blocks.grad))
                & (np.abs(blocks.grad_int) <= _scaled_tolerance(blocks.grad_int)))
    return degenerate, degenerate & ~harmless


def skorohod_weight(blocks: SkorohodBlocks,
                    terminal_increment: np.ndarray) -> PathWeights:
    """The shared weight (g/d)(W_k(T) + di/d) - gi/d."""
    degenerate, rejected = _degenerate_split(blocks)
    safe = np.where(degenerate, 1.0, blocks.denom)
    values = (blocks.grad / safe * (terminal_increment + blocks.denom_int / safe)
              - blocks.grad_int / safe)
    return PathWeights(values=np.where(degenerate, 0.0, values), rejected=rejected)


def reciprocal_divergence(blocks: SkorohodBlocks,
                          terminal_increment: np.ndarray) -> PathWeights:
    """Skorohod integral of the reciprocal denominator: W_k(T)/d + di/d^2.

    Mean zero by duality; its sample variance sets the digital kernel
    scale.
    """
    degenerate, rejected = _degenerate_split(blocks)
    safe = np.where(degenerate, 1.0, blocks.denom)
    values = terminal_increment / safe + blocks.denom_int / safe ** 2
    return PathWeights(values=np.where(degenerate, 0.0, values), rejected=rejected)


def digital_weight(blocks: SkorohodBlocks, terminal_increment: np.ndarray,
                   average: np.ndarray, strike: float,
                   bandwidth: float) -> PathWeights:
    """Kernel-localized weight for the cash-or-nothing payoff.

    Uses the Laplace kernel phi(z) = exp(-|z|) around the strike with
    scale `bandwidth`; the derivative at the tie point is taken as 0.
    The estimator multiplies these values by the digital payoff.
    """
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    degenerate, rejected = _degenerate_split(blocks)
    safe = np.where(degenerate, 1.0, blocks.denom)
    z = (average - strike) / bandwidth
    kernel = np.exp(-np.abs(z))
    kernel_slope = -np.sign(z) * kernel
    divergence = terminal_increment / safe + blocks.denom_int / safe ** 2
    values = (kernel * (blocks.grad * divergence - blocks.grad_int / safe)
              - blocks.grad / bandwidth * kernel_slope)
    return PathWeights(values=np.where(degenerate, 0.0, values), rejected=rejected)


# ---------------------------------------------------------------------------
# two-variable weight for the best_of payoff


def best_of_weight(config: MarketConfig, loadings: np.ndarray,
                   weights: np.ndarray, bundle: PathBundle,
                   component: int) -> PathWeights:
    """Weight for payoffs of both the running average and the terminal mean.

    Differentiating through max(average, terminal mean) needs a pair of
    dual processes, one per variable, obtained by inverting the 2x2
    system of their Malliavin covariations; the weight is the
    difference of the two resulting Skorohod integrals. The first uses
    a constant-in-time direction, the second a direction proportional
    to s, which brings in the pathwise integral int_0^T s dW_k =
    T W_k(T) - int_0^T W_k ds.
    """
    m, n = config.n_assets, config.n_dates
    if n < 2:
        raise ValueError(
            "best_of weights need at least two monitoring dates; the "
            "covariation system is singular on a single date")
    spot = bundle.spot_grid
    t = config.monitoring_times
    big_t = config.maturity
    x_k = config.spots[component]
    col = loadings[:, component]
    dt = config.interval_lengths
    grid = config.grid
    interval_moments = np.diff(grid * grid) / 2.0

    term_coeff = np.zeros((m, n))
    term_coeff[component, -1] = 1.0 / (m * x_k)
    avg_coeff = np.zeros((m, n))
    avg_coeff[component] = weights[component] / x_k
    int_term_coeff = np.zeros((m, n))
    int_term_coeff[:, -1] = big_t * col / m
    int_avg_coeff = weights * t[None, :] * col[:, None]
    s_term_coeff = np.zeros((m, n))
    s_term_coeff[:, -1] = big_t * big_t * col / (2.0 * m)
    s_avg_coeff = weights * (t * t)[None, :] * col[:, None] / 2.0

    term = lincomb_jet(spot, loadings, term_coeff, component)
    avg = lincomb_jet(spot, loadings, avg_coeff, component)
    int_term = lincomb_jet(spot, loadings, int_term_coeff, component)
    int_avg = lincomb_jet(spot, loadings, int_avg_coeff, component)
    s_int_term = lincomb_jet(spot, loadings, s_term_coeff, component)
    s_int_avg = lincomb_jet(spot, loadings, s_avg_coeff, component)

    rejected = ((np.abs(avg.value) <= _scaled_tolerance(avg.value))
                | (np.abs(term.value) <= _scaled_tolerance(term.value)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        det = int_term * s_int_avg - int_avg * s_int_term
        rejected |= np.abs(det.value) <= _scaled_tolerance(det.value)
        dual_term = (s_int_avg - s_int_term * (avg / term)) / det
        dual_avg = (int_avg * (term / avg) - int_term) / det

        w_k = bundle.w_terminal[:, component]
        first = (dual_term.value * term.value * w_k
                 - dual_term.value * term.time_integral(dt)
                 - term.value * dual_term.time_integral(dt))
        s_increment = big_t * w_k - bundle.w_time_integral[:, component]
        second = (dual_avg.value * avg.value * s_increment
                  - avg.value * dual_avg.weighted_time_integral(interval_moments)
                  - dual_avg.value * avg.weighted_time_integral(interval_moments))
        values = first - second
    return PathWeights(values=np.where(rejected, 0.0, values), rejected=rejected)


# ---------------------------------------------------------------------------
# localization


def smoothed_indicator(values: np.ndarray, strike: float,
                       half_width: float) -> np.ndarray:
    """Linear ramp from 0 to 1 across [strike - w, strike + w]."""
    return np.clip((values - strike + half_width) / (2.0 * half_width), 0.0, 1.0)


def ramp_antiderivative(values: np.ndarray, strike: float,
                        half_width: float) -> np.ndarray:
    """Antiderivative of the ramp, zero at and below strike - w."""
    shifted = values - strike
    inside = (shifted + half_width) ** 2 / (4.0 * half_width)
    return np.where(shifted <= -half_width, 0.0,
                    np.where(shifted >= half_width, shifted, inside))


def localization_remainder(values: np.ndarray, strike: float,
                           half_width: float) -> np.ndarray:
    """(z - strike)^+ minus the ramp antiderivative.

    Supported on the ramp band only, so the weight term it multiplies
    contributes nothing away from the kink.
    """
    return (np.maximum(values - strike, 0.0)
            - ramp_antiderivative(values, strike, half_width))


# ---------------------------------------------------------------------------
# adaptive parameters from pilot samples


def adaptive_half_width(gain: np.ndarray,
                        weight_values: np.ndarray) -> float | None:
    """Var[gain * weight] / Var[weight]; None when the weight is flat."""
    weight_var = float(np.var(weight_values, ddof=1))
    if weight_var <= 0.0 or not np.isfinite(weight_var):
        return None
    return float(np.var(gain * weight_values, ddof=1)) / weight_var


def adaptive_bandwidth(divergence_values: np.ndarray) -> float | None:
    """Reciprocal root of Var[divergence]; None when degenerate."""
    variance = float(np.var(divergence_values, ddof=1))
    if variance <= 0.0 or not np.isfinite(variance):
        return None
    return variance ** -0.5


WIDTH_SEARCH_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.20, 0.50)


def adaptive_width_search(variable: np.ndarray, center: float,
                          slope: np.ndarray, weight_values: np.ndarray,
                          rejected: np.ndarray, scale: float,
                          fractions: tuple[float, ...] = WIDTH_SEARCH_FRACTIONS,
                          ) -> float | None:
    """Half-width minimizing the pilot variance of the delta contribution.

    Evaluates ramp * slope + remainder * weight on the pilot paths for
    each candidate width (a fraction of scale) and returns the
    variance-minimizing one. The closed-form variance-ratio shortcut
    is useless when the weight is heavy-tailed: a handful of
    near-singular paths blow the ratio up by orders of magnitude, and
    the resulting width exposes the weight term to exactly those
    tails. Scanning candidate widths keeps the choice tied to the
    quantity the main run actually averages, so tail-inflated widths
    disqualify themselves. Ties go to the narrowest width; None means
    the pilot is degenerate and the caller should fall back.
    """
    keep = ~rejected
    if keep.sum() < 2:
        return None
    values = variable[keep]
    kept_slope = slope[keep]
    kept_weight = weight_values[keep]
    best_width = None
    best_variance = np.inf
    for fraction in fractions:
        width = fraction * scale
        contribution = (smoothed_indicator(values, center, width) * kept_slope
                        + localization_remainder(values, center, width)
                        * kept_weight)
        variance = float(np.var(contribution, ddof=1))
        if np.isfinite(variance) and variance < best_variance:
            best_variance = variance
            best_width = width
    if best_width is None or best_variance <= 0.0:
        return None
    return best_width


def width_by_replication_spread(rep_means: np.ndarray,
                                widths: Sequence[float]) -> float | None:
    """Candidate width whose pilot replication means scatter least.

    rep_means holds one row per pilot sub-replication and one column
    per candidate width. The column spread estimates the error the
    main run would see at that width, so minimizing it targets the
    reported standard error directly; per-path variance cannot, since
    it is blind to how much of each integrand the point set
    equidistributes away. Ties go to the narrowest width. None means
    no column is usable and the caller should fall back.
    """
    means = np.asarray(rep_means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] < 2 or means.shape[1] != len(widths):
        return None
    best_width = None
    best_spread = np.inf
    for width, column in sorted(zip(widths, means.T), key=lambda pair: pair[0]):
        if not np.isfinite(column).all():
            continue
        spread = float(np.std(column, ddof=1))
        if spread < best_spread:
            best_spread = spread
            best_width = width
    if best_width is None or best_spread <= 0.0:
        return None
    return best_width
