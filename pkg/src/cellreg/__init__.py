"""Robust sparse regression with simultaneous cellwise outlier detection.

The library fits sparse linear models whose loss couples the regression
residuals with per-cell deviations of the design matrix, so that individual
contaminated cells (and response entries) are shrunk toward the model
instead of corrupting the fit. It ships robust standardization utilities,
the alternating solvers, penalty-path model selection, a Monte-Carlo
simulation lab, and a CSV-oriented command line.
"""

from .engine import (
    CellRegProblem,
    CellRegResult,
    cellwise_regularize,
    gradient_delta,
    objective,
    soft_threshold,
)
from .robust import (
    QN_CONSISTENCY,
    Dataset,
    DegenerateColumnError,
    StandardizationInfo,
    back_transform,
    estimate_sigma,
    median,
    qn_scale,
    screen_top_k,
    standardize,
    winsorized_correlation,
)
from .selection import (
    PathResult,
    aic,
    bic,
    fit_lasso_baseline,
    fit_path,
    lambda_grid,
    selection_loss,
    shrink_rate_exclusion,
)
from .simlab import (
    METHODS,
    GeneratedInstance,
    SimulationScenario,
    ar1_covariance,
    generate,
    mape,
    rmspe,
    run_experiment,
    selection_metrics,
    summarize_metrics,
    write_metrics_csv,
)
from .solvers import (
    DEFAULT_ETA,
    DEFAULT_THETA,
    CellwiseSolution,
    FitConfig,
    cr_lasso,
    cr_ls,
    lasso_bic,
    lasso_cd,
    ols,
    post_cr_regression,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # engine
    "CellRegProblem", "CellRegResult", "cellwise_regularize", "gradient_delta",
    "objective", "soft_threshold",
    # robust
    "QN_CONSISTENCY", "Dataset", "DegenerateColumnError", "StandardizationInfo",
    "back_transform", "estimate_sigma", "median", "qn_scale", "screen_top_k",
    "standardize", "winsorized_correlation",
    # solvers
    "DEFAULT_ETA", "DEFAULT_THETA", "CellwiseSolution", "FitConfig", "cr_lasso",
    "cr_ls", "lasso_bic", "lasso_cd", "ols", "post_cr_regression",
    # selection
    "PathResult", "aic", "bic", "fit_lasso_baseline", "fit_path", "lambda_grid",
    "selection_loss", "shrink_rate_exclusion",
    # simlab
    "METHODS", "GeneratedInstance", "SimulationScenario", "ar1_covariance",
    "generate", "mape", "rmspe", "run_experiment", "selection_metrics",
    "summarize_metrics", "write_metrics_csv",
]
