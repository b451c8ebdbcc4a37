"""Monte-Carlo lab: contaminated data generators, prediction and selection
metrics, and the seeded replicate experiment driver."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .robust import Dataset
from .selection import fit_lasso_baseline, fit_path
from .solvers import FitConfig

__all__ = [
    "METHODS",
    "SimulationScenario",
    "GeneratedInstance",
    "ar1_covariance",
    "generate",
    "rmspe",
    "mape",
    "selection_metrics",
    "run_experiment",
    "summarize_metrics",
    "write_metrics_csv",
]

log = logging.getLogger(__name__)

METHODS = ("cr_lasso", "cr_lasso_no_post", "lasso")
PREDICTOR_DISTS = ("normal", "t4", "cauchy")
CONTAMINATION_MODES = ("cellwise", "rowwise")

# Test sets are drawn from a disjoint seed range so they are independent of
# every training replicate.
TEST_SEED_OFFSET = 1_000_000

_BASE_METRICS = ("rmspe", "mape", "tp", "fp", "fn", "tn", "f1", "n_selected")
_PATH_METRICS = ("outer_iterations", "max_outer_iterations",
                 "path_within_20_rate", "converged")


@dataclass
class SimulationScenario:
    """Generative configuration for one simulated regression problem.

    The first ``n_active`` coefficients equal one, the rest are zero. Rows
    of the clean design follow an AR(1) correlation structure (except for
    Cauchy predictors, which are entrywise independent). Contamination adds
    shifts of magnitude around ``gamma`` (random sign) to a fraction ``e``
    of cells, either independently per cell or to whole rows at once; the
    response is contaminated at the same rate when ``contaminate_response``
    is set.
    """

    n: int
    p: int
    n_active: int = 10
    rho: float = 0.5
    predictor_dist: str = "normal"
    sigma_eps: float = 3.0
    intercept: float = 1.0
    e: float = 0.0
    gamma: float = 0.0
    mode: str = "cellwise"
    contaminate_response: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 <= self.n_active <= self.p:
            raise ValueError("n_active must lie between 0 and p")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie strictly between -1 and 1")
        if self.predictor_dist not in PREDICTOR_DISTS:
            raise ValueError(f"predictor_dist must be one of {PREDICTOR_DISTS}")
        if not 0 <= self.e < 1:
            raise ValueError("e must lie in [0, 1)")
        if self.mode not in CONTAMINATION_MODES:
            raise ValueError(f"mode must be one of {CONTAMINATION_MODES}")
        for name in ("rho", "sigma_eps", "intercept", "e", "gamma"):
            if not math.isfinite(float(getattr(self, name))):
                raise ValueError(f"{name} must be finite")


@dataclass
class GeneratedInstance:
    """One simulated dataset: clean and contaminated copies plus the masks
    marking exactly the cells where the two differ."""

    x_clean: np.ndarray
    x_contaminated: np.ndarray
    y_clean: np.ndarray
    y_contaminated: np.ndarray
    true_beta: np.ndarray
    outlier_mask_x: np.ndarray
    outlier_mask_y: np.ndarray


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """Covariance with entries ``rho ** |i - j|``; positive definite for |rho| < 1."""
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def generate(scenario: SimulationScenario) -> GeneratedInstance:
    """Draw one instance from the scenario, deterministically from its seed."""
    rng = np.random.default_rng(scenario.seed)
    n, p = scenario.n, scenario.p

    z = rng.standard_normal((n, p))
    if scenario.predictor_dist == "cauchy":
        # no correlation structure: the covariance does not exist
        x_clean = rng.standard_cauchy((n, p))
    else:
        chol = np.linalg.cholesky(ar1_covariance(p, scenario.rho))
        x_clean = z @ chol.T
        if scenario.predictor_dist == "t4":
            # one mixing variable per row gives classical multivariate-t rows
            w = rng.chisquare(4, size=n)
            x_clean = x_clean / np.sqrt(w / 4.0)[:, None]

    true_beta = np.zeros(p)
    true_beta[: scenario.n_active] = 1.0
    noise = rng.normal(0.0, scenario.sigma_eps, size=n)
    y_clean = scenario.intercept + x_clean @ true_beta + noise

    if scenario.mode == "cellwise":
        mask_x = rng.random((n, p)) < scenario.e
    else:
        mask_x = np.repeat(rng.random(n) < scenario.e, p).reshape(n, p)
    signs_x = rng.choice((-1.0, 1.0), size=(n, p))
    shifts_x = signs_x * rng.normal(scenario.gamma, 1.0, size=(n, p))
    x_contaminated = np.where(mask_x, x_clean + shifts_x, x_clean)

    if scenario.contaminate_response:
        mask_y = rng.random(n) < scenario.e
    else:
        mask_y = np.zeros(n, dtype=bool)
    signs_y = rng.choice((-1.0, 1.0), size=n)
    shifts_y = signs_y * rng.normal(scenario.gamma, 1.0, size=n)
    y_contaminated = np.where(mask_y, y_clean + shifts_y, y_clean)

    return GeneratedInstance(
        x_clean=x_clean,
        x_contaminated=x_contaminated,
        y_clean=y_clean,
        y_contaminated=y_contaminated,
        true_beta=true_beta,
        outlier_mask_x=mask_x,
        outlier_mask_y=mask_y,
    )


def rmspe(y_true, y_pred) -> float:
    """Root mean squared prediction error."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("prediction and truth must be non-empty vectors of equal length")
    resid = y_true - y_pred
    return float(np.sqrt(np.mean(resid * resid)))


def mape(y_true, y_pred) -> float:
    """Mean absolute prediction error."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("prediction and truth must be non-empty vectors of equal length")
    return float(np.mean(np.abs(y_true - y_pred)))


def selection_metrics(selected, truth, p: int) -> dict[str, float]:
    """Confusion counts and F1 for a variable selection against the truth.

    F1 is ``2 TP / (2 TP + FP + FN)``; when the denominator vanishes it is 1
    if both sets are empty and 0 otherwise.
    """
    selected = set(int(j) for j in np.asarray(selected, dtype=int).ravel())
    truth = set(int(j) for j in np.asarray(truth, dtype=int).ravel())
    for j in selected | truth:
        if not 0 <= j < p:
            raise ValueError(f"index {j} outside 0..{p - 1}")
    tp = len(selected & truth)
    fp = len(selected - truth)
    fn = len(truth - selected)
    tn = p - tp - fp - fn
    denom = 2 * tp + fp + fn
    if denom == 0:
        f1 = 1.0 if not truth and not selected else 0.0
    else:
        f1 = 2.0 * tp / denom
    return {"tp": float(tp), "fp": float(fp), "fn": float(fn), "tn": float(tn), "f1": f1}


def _fit_all(train: GeneratedInstance, methods, config, grid_size, iota):
    """Fit every requested method on the contaminated training data.

    The with- and without-post-regression variants share a single path run,
    so their comparison is exactly paired. Returns per-method dicts with raw
    coefficients, intercept, and diagnostics; a failed fit maps to None.
    """
    fits: dict[str, dict | None] = {}
    want_path = [m for m in ("cr_lasso", "cr_lasso_no_post") if m in methods]
    if want_path:
        try:
            data = Dataset(train.x_contaminated, train.y_contaminated)
            path = fit_path(data, config=config, grid_size=grid_size, iota=iota,
                            post_regression=True)
            selected = path.solutions[path.selected_index]
            iters = [s.outer_iterations for s in path.solutions]
            models = {"cr_lasso": path.final_model, "cr_lasso_no_post": selected}
            for m in want_path:
                model = models[m]
                fits[m] = {
                    "beta": model.beta,
                    "intercept": model.intercept,
                    "support": model.support,
                    "outer_iterations": float(model.outer_iterations),
                    "max_outer_iterations": float(max(iters)),
                    "path_within_20_rate": float(np.mean([i <= 20 for i in iters])),
                    "converged": float(model.converged and all(s.converged for s in path.solutions)),
                }
        except Exception:
            log.warning("cellwise-regularized fit failed; recording missing values", exc_info=True)
            for m in want_path:
                fits[m] = None
    if "lasso" in methods:
        try:
            beta, intercept = fit_lasso_baseline(train.x_contaminated, train.y_contaminated,
                                                 grid_size=grid_size, iota=iota)
            fits["lasso"] = {
                "beta": beta,
                "intercept": intercept,
                "support": np.flatnonzero(beta),
            }
        except Exception:
            log.warning("lasso baseline fit failed; recording missing values", exc_info=True)
            fits["lasso"] = None
    return fits


def run_experiment(
    scenario: SimulationScenario,
    methods=("cr_lasso", "lasso"),
    replicates: int = 50,
    base_seed: int = 0,
    config: FitConfig | None = None,
    grid_size: int = 50,
    iota: float = 0.001,
) -> list[tuple[int, str, str, float]]:
    """Run seeded replicates and collect a long-format metrics table.

    Each replicate trains on a freshly generated contaminated dataset
    (seed ``base_seed + replicate``) and evaluates predictions on an
    independently generated clean test set of the same size. Rows are
    ``(replicate, method, metric, value)``; a failed fit yields NaN values
    (with the reason logged) instead of aborting the run.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; choose from {METHODS}")
    truth = np.arange(scenario.n_active)
    rows: list[tuple[int, str, str, float]] = []
    for rep in range(replicates):
        train = generate(replace(scenario, seed=base_seed + rep))
        test = generate(replace(scenario, e=0.0, seed=base_seed + rep + TEST_SEED_OFFSET))
        fits = _fit_all(train, methods, config, grid_size, iota)
        for method in methods:
            fit = fits.get(method)
            metrics: dict[str, float] = {}
            if fit is None:
                metrics = {name: math.nan for name in _BASE_METRICS}
                if method != "lasso":
                    metrics.update({name: math.nan for name in _PATH_METRICS})
                metrics["failed"] = 1.0
            else:
                pred = fit["intercept"] + test.x_clean @ fit["beta"]
                metrics["rmspe"] = rmspe(test.y_clean, pred)
                metrics["mape"] = mape(test.y_clean, pred)
                metrics.update(selection_metrics(fit["support"], truth, scenario.p))
                metrics["n_selected"] = float(len(fit["support"]))
                for name in _PATH_METRICS:
                    if name in fit:
                        metrics[name] = fit[name]
                metrics["failed"] = 0.0
            for name, value in metrics.items():
                rows.append((rep, method, name, float(value)))
    return rows


def summarize_metrics(rows) -> list[tuple[str, str, float, float]]:
    """Mean and standard deviation per (method, metric), in first-seen order.

    NaN values (failed fits) are excluded from the aggregates.
    """
    order: list[tuple[str, str]] = []
    groups: dict[tuple[str, str], list[float]] = {}
    for _, method, metric, value in rows:
        key = (method, metric)
        if key not in groups:
            groups[key] = []
            order.append(key)
        if not math.isnan(value):
            groups[key].append(value)
    out = []
    for method, metric in order:
        values = np.array(groups[(method, metric)])
        if values.size == 0:
            mean, sd = math.nan, math.nan
        else:
            mean = float(values.mean())
            sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
        out.append((method, metric, mean, sd))
    return out


def write_metrics_csv(rows, path) -> None:
    """Write the long-format metrics table as CSV (UTF-8, LF, '.' decimals)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["replicate", "method", "metric", "value"])
        for rep, method, metric, value in rows:
            writer.writerow([rep, method, metric, f"{value:.10g}"])
