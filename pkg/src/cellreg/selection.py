"""Penalty-path construction, information criteria, and the path driver."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .engine import CellRegProblem
from .robust import Dataset, StandardizationInfo, back_transform, standardize
from .solvers import (
    CellwiseSolution,
    FitConfig,
    cr_lasso,
    lasso_bic,
    post_cr_regression,
)

__all__ = [
    "PathResult",
    "lambda_grid",
    "selection_loss",
    "bic",
    "aic",
    "shrink_rate_exclusion",
    "fit_path",
    "fit_lasso_baseline",
]

_EXCLUDED_REASON = "cell shrink rate above 30% in an active column"


def lambda_grid(x_star, y_scaled, iota: float = 0.001, grid_size: int = 50) -> np.ndarray:
    """Log-spaced penalty grid from the null-model boundary downward.

    The largest value is the sup-norm of the column-response inner products,
    the smallest value at which the plain Lasso coefficient vector is
    entirely zero; the grid descends logarithmically to ``iota`` times it.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if not 0 < iota < 1:
        raise ValueError("iota must lie strictly between 0 and 1")
    x_star = np.asarray(x_star, dtype=float)
    y_scaled = np.asarray(y_scaled, dtype=float)
    lam_max = float(np.max(np.abs(x_star.T @ y_scaled))) if x_star.size else 0.0
    if lam_max == 0.0:
        raise ValueError("degenerate path: the response is orthogonal to every column")
    return np.geomspace(lam_max, iota * lam_max, grid_size)


def selection_loss(solution: CellwiseSolution, problem: CellRegProblem) -> float:
    """Model-selection loss: squared scaled residuals plus twice the weighted
    response-adjustment magnitude (the cell penalty term is left out)."""
    resid = problem.y_centered - (problem.x_star - solution.delta) @ solution.beta_star
    u = resid / problem.sigma_hat - solution.zeta
    return float(u @ u + 2.0 * problem.theta * np.sum(np.abs(solution.zeta)))


def bic(solution: CellwiseSolution, problem: CellRegProblem, n: int | None = None) -> float:
    """Bayesian information criterion: selection loss plus ``log(n) k``."""
    n = len(problem.y_centered) if n is None else int(n)
    k = int(np.count_nonzero(solution.beta_star))
    return selection_loss(solution, problem) + math.log(n) * k


def aic(solution: CellwiseSolution, problem: CellRegProblem, n: int | None = None) -> float:
    """Akaike information criterion: selection loss plus ``2 k``."""
    k = int(np.count_nonzero(solution.beta_star))
    return selection_loss(solution, problem) + 2.0 * k


def shrink_rate_exclusion(solution: CellwiseSolution, n: int, threshold: float = 0.30) -> bool:
    """True (exclude the model) when any active column has more than
    ``threshold * n`` adjusted cells, a sign of over-regularization."""
    active = solution.support
    if active.size == 0:
        return False
    shrunk = np.count_nonzero(solution.delta[:, active], axis=0)
    return bool(np.any(shrunk > threshold * n))


def _select_index(scores, excluded) -> tuple[int, bool]:
    """Pick the best score among non-excluded entries; ties go to the earlier
    entry (larger penalty, sparser model). When everything is excluded the
    rule is waived with a warning rather than returning nothing."""
    scores = np.asarray(scores, dtype=float)
    excluded = np.asarray(excluded, dtype=bool)
    waived = False
    eligible = ~excluded
    if not eligible.any():
        warnings.warn(
            "every path model failed the cell-shrinkage rule; "
            "waiving the rule and selecting by the information criterion alone"
        )
        waived = True
        eligible = np.ones_like(excluded)
    masked = np.where(eligible, scores, np.inf)
    return int(np.argmin(masked)), waived


@dataclass
class PathResult:
    """Everything produced by one penalty-path run.

    ``selected_index`` points into the full per-penalty arrays and minimizes
    the criterion among non-excluded entries (among all entries when the
    exclusion rule had to be waived). ``final_model`` carries raw-scale
    coefficients; it is the post-refit model unless post-regression was
    turned off, in which case it is the selected path solution.
    """

    lambdas: np.ndarray
    solutions: list[CellwiseSolution]
    bic: np.ndarray
    excluded: np.ndarray
    exclusion_reasons: list[str | None]
    selected_index: int
    final_model: CellwiseSolution
    info: StandardizationInfo
    exclusion_waived: bool = False


def _with_raw(solution: CellwiseSolution, info: StandardizationInfo) -> CellwiseSolution:
    beta, intercept = back_transform(solution.beta_star, info)
    return replace(solution, beta=beta, intercept=intercept)


def fit_path(
    data: Dataset,
    config: FitConfig | None = None,
    iota: float = 0.001,
    grid_size: int = 50,
    post_regression: bool = True,
    sigma: float | None = None,
    criterion: str = "bic",
) -> PathResult:
    """Standardize once, fit the whole penalty path, and select a model.

    Fits run from the largest penalty downward with warm-started
    coefficients. Each fit is scored by the information criterion and
    checked against the cell-shrinkage exclusion rule; the winner's support
    is then refit without the sparsity penalty (unless ``post_regression``
    is off). Raw-scale coefficients are attached to every solution.
    """
    config = FitConfig() if config is None else config
    if criterion not in ("bic", "aic"):
        raise ValueError("criterion must be 'bic' or 'aic'")
    score_fn = bic if criterion == "bic" else aic

    x_star, y_centered, info = standardize(data, eta=config.eta, sigma=sigma)
    n, p = x_star.shape
    y_scaled = y_centered / info.sigma_hat
    lambdas = lambda_grid(x_star, y_scaled, iota=iota, grid_size=grid_size)

    solutions: list[CellwiseSolution] = []
    scores = np.empty(lambdas.size)
    excluded = np.zeros(lambdas.size, dtype=bool)
    reasons: list[str | None] = []
    warm = np.zeros(p)
    for i, lam in enumerate(lambdas):
        cfg = replace(config, lam=float(lam))
        solution = cr_lasso(x_star, y_centered, info.sigma_hat, cfg, beta_init=warm)
        warm = solution.beta_star
        problem = CellRegProblem(x_star, y_centered, solution.beta_star,
                                 info.sigma_hat, cfg.eta, cfg.theta)
        scores[i] = score_fn(solution, problem, n)
        excluded[i] = shrink_rate_exclusion(solution, n)
        reasons.append(_EXCLUDED_REASON if excluded[i] else None)
        solutions.append(solution)

    selected_index, waived = _select_index(scores, excluded)
    if post_regression:
        final = post_cr_regression(
            x_star, y_centered, info.sigma_hat,
            solutions[selected_index].support, config,
        )
    else:
        final = solutions[selected_index]

    solutions = [_with_raw(s, info) for s in solutions]
    return PathResult(
        lambdas=lambdas,
        solutions=solutions,
        bic=scores,
        excluded=excluded,
        exclusion_reasons=reasons,
        selected_index=selected_index,
        final_model=_with_raw(final, info),
        info=info,
        exclusion_waived=waived,
    )


def fit_lasso_baseline(x, y, iota: float = 0.001, grid_size: int = 50, tol: float = 1e-8):
    """Plain Lasso comparator: classical standardization, warm-started
    penalty path, and the classical BIC.

    Not robust by design; serves as the non-robust reference in experiments.
    Returns ``(beta, intercept)`` on the raw data scale.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    sds = np.where(sds == 0, 1.0, sds)
    xs = (x - means) / sds
    y_mean = float(y.mean())
    best = lasso_bic(xs, y - y_mean, grid_size=grid_size, iota=iota, tol=tol)
    beta = best / sds
    intercept = y_mean - float(beta @ means)
    return beta, intercept
