"""Robust univariate estimators, standardization, and correlation screening."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .solvers import DEFAULT_ETA, lasso_bic, ols

__all__ = [
    "QN_CONSISTENCY",
    "Dataset",
    "StandardizationInfo",
    "DegenerateColumnError",
    "median",
    "qn_scale",
    "standardize",
    "back_transform",
    "estimate_sigma",
    "winsorized_correlation",
    "screen_top_k",
]

# Multiplier making the pairwise-difference order statistic consistent for
# the standard deviation at the normal distribution.
QN_CONSISTENCY = 2.2219

# Above this length the pairwise differences no longer fit in memory, so the
# order statistic is selected by bisection on the value instead of full
# enumeration. Both paths are exact.
_QN_NAIVE_LIMIT = 1500
_QN_BAND_LIMIT = 2_000_000


class DegenerateColumnError(ValueError):
    """A design column has zero robust scale and cannot be standardized."""


def _finite_vector(x, who: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{who} expects a one-dimensional vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{who} requires finite entries")
    return x


def median(x) -> float:
    """Middle order statistic; for even length, the mean of the two middle values."""
    x = _finite_vector(x, "median")
    if x.size == 0:
        raise ValueError("median of an empty vector is undefined")
    return float(np.median(x))


def qn_scale(x) -> float:
    """High-breakdown scale estimate from pairwise absolute differences.

    Returns ``QN_CONSISTENCY`` times the k-th smallest of the n(n-1)/2
    pairwise absolute differences, with ``k = h(h-1)/2`` and
    ``h = floor(n/2) + 1``. Constant input yields 0. Exact for every n: small
    inputs enumerate all pairs, large ones select the order statistic by
    bisection on the value with an exact enumeration of the final band.
    The quadratic path is the intended desk-scale behavior; it is the
    performance boundary of this module.
    """
    x = _finite_vector(x, "qn_scale")
    n = x.size
    if n < 2:
        raise ValueError("qn_scale needs at least two observations")
    xs = np.sort(x)
    if xs[-1] == xs[0]:
        return 0.0
    h = n // 2 + 1
    k = h * (h - 1) // 2
    if n <= _QN_NAIVE_LIMIT:
        kth = _kth_pairwise_diff_naive(xs, k)
    else:
        kth = _kth_pairwise_diff_bisect(xs, k)
    return float(QN_CONSISTENCY * kth)


def _kth_pairwise_diff_naive(xs: np.ndarray, k: int) -> float:
    rows, cols = np.triu_indices(xs.size, 1)
    diffs = xs[cols] - xs[rows]
    return float(np.partition(diffs, k - 1)[k - 1])


def _count_pairs_at_most(xs: np.ndarray, t: float) -> int:
    # number of pairs i < j with xs[j] - xs[i] <= t, for sorted xs and t >= 0
    first = np.searchsorted(xs, xs - t, side="left")
    return int(np.sum(np.arange(xs.size) - first))


def _kth_pairwise_diff_bisect(xs: np.ndarray, k: int) -> float:
    n = xs.size
    lo, hi = 0.0, float(xs[-1] - xs[0])
    count_lo = _count_pairs_at_most(xs, lo)
    if count_lo >= k:
        return 0.0
    count_hi = n * (n - 1) // 2
    while count_hi - count_lo > _QN_BAND_LIMIT:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # band narrowed to a single representable value: a massive tie
            return hi
        count_mid = _count_pairs_at_most(xs, mid)
        if count_mid >= k:
            hi, count_hi = mid, count_mid
        else:
            lo, count_lo = mid, count_mid
    # enumerate the pairs with lo < difference <= hi and select exactly
    pos = np.arange(n)
    start = np.searchsorted(xs, xs - hi, side="left")
    end = np.minimum(np.searchsorted(xs, xs - lo, side="left"), pos)
    counts = end - start
    total = int(counts.sum())
    col = np.repeat(pos, counts)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    row = np.arange(total) - np.repeat(offsets, counts) + np.repeat(start, counts)
    band = xs[col] - xs[row]
    return float(np.partition(band, k - count_lo - 1)[k - count_lo - 1])


@dataclass
class Dataset:
    """Raw response vector and design matrix with optional column names."""

    x: np.ndarray
    y: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("response length does not match the design matrix")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("data must be finite; missing values are not supported")
        if self.column_names is not None and len(self.column_names) != self.x.shape[1]:
            raise ValueError("column_names length does not match the design matrix")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def name_of(self, j: int) -> str:
        if self.column_names is not None:
            return self.column_names[j]
        return f"x{j}"


@dataclass
class StandardizationInfo:
    """Per-column robust location and scale of the design, the response
    median, and the residual scale estimate; enables the back-transform."""

    col_medians: np.ndarray
    col_scales: np.ndarray
    response_median: float
    sigma_hat: float

    def __post_init__(self):
        self.col_medians = np.asarray(self.col_medians, dtype=float)
        self.col_scales = np.asarray(self.col_scales, dtype=float)
        if self.col_medians.shape != self.col_scales.shape or self.col_medians.ndim != 1:
            raise ValueError("col_medians and col_scales must be vectors of equal length")
        if np.any(self.col_scales <= 0):
            raise ValueError("column scales must be strictly positive")
        if not float(self.sigma_hat) > 0:
            raise ValueError("sigma_hat must be strictly positive")


def standardize(data: Dataset, eta: float = DEFAULT_ETA, sigma: float | None = None):
    """Robustly standardize a dataset.

    Columns are centered by their medians and scaled by their pairwise
    difference scales; the response is centered by its median. The residual
    scale is filled in by :func:`estimate_sigma` unless ``sigma`` overrides
    it. Degenerate (constant) columns are rejected by name rather than
    silently dropped, since dropping would corrupt the cell bookkeeping of
    downstream adjustment matrices.

    Returns ``(x_star, y_centered, info)``.
    """
    medians = np.median(data.x, axis=0) if data.p else np.zeros(0)
    scales = np.array([qn_scale(col) for col in data.x.T]) if data.p else np.zeros(0)
    bad = np.flatnonzero(scales <= 0)
    if bad.size:
        names = ", ".join(data.name_of(j) for j in bad)
        raise DegenerateColumnError(
            f"column(s) with zero robust scale cannot be standardized: {names}"
        )
    x_star = (data.x - medians) / scales
    response_median = float(np.median(data.y))
    y_centered = data.y - response_median
    if sigma is not None:
        sigma_hat = float(sigma)
    else:
        sigma_hat = estimate_sigma(x_star, y_centered, eta=eta)
    info = StandardizationInfo(medians, scales, response_median, sigma_hat)
    return x_star, y_centered, info


def back_transform(beta_star, info: StandardizationInfo):
    """Map standardized-scale coefficients to the raw data scale.

    Returns ``(beta, intercept)`` such that predictions on the original data
    equal the standardized model's predictions.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != info.col_scales.shape:
        raise ValueError("beta_star length does not match the standardization info")
    beta = beta_star / info.col_scales
    intercept = float(info.response_median - beta @ info.col_medians)
    return beta, intercept


def estimate_sigma(x_star, y_centered, eta: float = DEFAULT_ETA) -> float:
    """Residual-scale plug-in.

    Fits a BIC-tuned Lasso on the elementwise clipped (winsorized)
    standardized design and takes the robust scale of the residuals of an
    unpenalized refit on the selected support (the refit removes shrinkage
    bias, which would otherwise inflate the scale). The clipping blunts
    gross cells before they can leverage the fit. Falls back to the response
    scale when the fit is degenerate, and a floor of ``1e-3`` times the
    response scale guards against division blow-up on near-noiseless data.
    """
    x_star = np.asarray(x_star, dtype=float)
    y_centered = np.asarray(y_centered, dtype=float)
    y_scale = qn_scale(y_centered)
    sigma = 0.0
    if y_scale > 0 and x_star.size:
        # mean-center the internal fit (an unpenalized intercept); clipping
        # happens first, so the means are computed from blunted cells
        x_clip = np.clip(x_star, -eta, eta)
        x_clip -= x_clip.mean(axis=0)
        y_fit = y_centered - y_centered.mean()
        beta = lasso_bic(x_clip, y_fit)
        support = np.flatnonzero(beta)
        resid = y_fit - x_clip @ beta
        if 0 < support.size < x_clip.shape[0]:
            try:
                refit = ols(x_clip[:, support], y_fit)
                resid = y_fit - x_clip[:, support] @ refit
            except np.linalg.LinAlgError:
                pass  # keep the penalized residuals
        sigma = qn_scale(resid)
        # undo the in-sample deflation of fitted residuals (+1 for the mean)
        n = x_clip.shape[0]
        dof = support.size + 1
        if dof < n:
            sigma /= math.sqrt(1.0 - dof / n)
    if sigma <= 0:
        sigma = y_scale
    sigma = max(sigma, 1e-3 * y_scale)
    if sigma <= 0:
        warnings.warn("response has zero robust scale; using unit residual scale")
        sigma = 1.0
    return float(sigma)


def winsorized_correlation(x, y, clip: float = DEFAULT_ETA) -> float:
    """Correlation after robust standardization and symmetric clipping.

    Both variables are centered by their medians, scaled by their robust
    scales, clipped to ``[-clip, clip]``, and the Pearson correlation of the
    clipped pairs is returned. The default threshold matches the cell
    penalty default so that one consistent notion of an outlying cell is
    used throughout. Degenerate inputs (zero robust scale, or zero variance
    after clipping) yield 0 with a warning.
    """
    x = _finite_vector(x, "winsorized_correlation")
    y = _finite_vector(y, "winsorized_correlation")
    if x.size != y.size:
        raise ValueError("vectors must have equal length")
    if x.size < 3:
        raise ValueError("winsorized_correlation needs at least three observations")

    def clipped(v):
        scale = qn_scale(v)
        if scale <= 0:
            return None
        return np.clip((v - np.median(v)) / scale, -clip, clip)

    zx = clipped(x)
    zy = clipped(y)
    if zx is not None and zy is not None:
        zx = zx - zx.mean()
        zy = zy - zy.mean()
    if zx is None or zy is None or not (zx @ zx > 0) or not (zy @ zy > 0):
        warnings.warn("zero variance after winsorization; correlation undefined, returning 0")
        return 0.0
    # explicit formula keeps the result exactly symmetric in the arguments
    r = float((zx @ zy) / np.sqrt((zx @ zx) * (zy @ zy)))
    return min(1.0, max(-1.0, r))


def screen_top_k(x, y, k: int, clip: float = DEFAULT_ETA) -> np.ndarray:
    """Indices of the k columns most correlated with the response.

    Columns are ranked by the absolute winsorized correlation, descending;
    ties break toward the lower column index.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError("design matrix must be two-dimensional")
    p = x.shape[1]
    if not 1 <= k <= p:
        raise ValueError(f"k must be between 1 and the number of columns ({p}), got {k}")
    correlations = np.array([winsorized_correlation(x[:, j], y, clip) for j in range(p)])
    order = np.argsort(-np.abs(correlations), kind="stable")
    return order[:k]
