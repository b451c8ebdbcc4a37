"""Command-line surface: fit models on CSV data, export the penalty path,
screen predictors, and drive simulation experiments from scenario files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 convergence failure
(the latter only with --strict). Primary output files are written only
after all computation succeeded, so error paths leave no partial outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .robust import Dataset, DegenerateColumnError, winsorized_correlation
from .selection import PathResult, fit_path
from .simlab import METHODS, SimulationScenario, run_experiment, summarize_metrics
from .solvers import DEFAULT_ETA, DEFAULT_THETA, FitConfig

__all__ = ["CliConfig", "UsageError", "DataError", "ConvergenceError",
           "cmd_fit", "cmd_path", "cmd_screen", "cmd_simulate", "main", "run"]


class UsageError(Exception):
    """Bad flags or option values; exit code 2."""


class DataError(Exception):
    """Unreadable or invalid input data; exit code 3."""


class ConvergenceError(Exception):
    """Fit did not converge under --strict; exit code 4."""


@dataclass
class CliConfig:
    """Validated options for one subcommand invocation."""

    subcommand: str
    input_path: str | None = None
    response_column: str | None = None
    eta: float = DEFAULT_ETA
    theta: float = DEFAULT_THETA
    sigma: float | None = None
    iota: float = 0.001
    grid_size: int = 50
    eps1: float = 1e-6
    eps2: float = 1e-3
    max_outer: int = 50
    seed: int = 0
    output_dir: str = "."
    k: int | None = None
    log_transform: bool = False
    post_regression: bool = True
    strict: bool = False
    scenario_path: str | None = None

    def fit_config(self) -> FitConfig:
        try:
            return FitConfig(eta=self.eta, theta=self.theta, eps1=self.eps1,
                             eps2=self.eps2, max_outer=self.max_outer)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(value) -> str:
    return f"{float(value):.10g}"


def _jfloat(value) -> float:
    # round-trip through the 10-significant-digit text form for stable output
    return float(_fmt(value))


def _atomic_write(path, write_body) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as handle:
        write_body(handle)
    os.replace(tmp, path)


def _write_csv(path, header, rows) -> None:
    def body(handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    _atomic_write(path, body)


def _read_csv(path):
    """Parse a numeric CSV with a header row; reject missing or non-numeric
    cells with the offending line number (no silent imputation)."""
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"empty CSV file: {path}") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
                values = []
                for name, cell in zip(header, row):
                    cell = cell.strip()
                    if cell == "":
                        raise DataError(
                            f"{path}:{lineno}: missing value in column '{name}' "
                            "(missing values are rejected, not imputed)")
                    try:
                        value = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: non-numeric value '{cell}' "
                            f"in column '{name}'") from None
                    if not math.isfinite(value):
                        raise DataError(f"{path}:{lineno}: non-finite value in column '{name}'")
                    values.append(value)
                rows.append(values)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"no data rows in CSV file: {path}")
    return header, np.array(rows, dtype=float)


def _split_response(header, matrix, response):
    if response in header:
        idx = header.index(response)
    else:
        try:
            idx = int(response)
        except (TypeError, ValueError):
            raise DataError(f"response column '{response}' not found in {header}") from None
        if not 0 <= idx < len(header):
            raise DataError(f"response column index {idx} outside 0..{len(header) - 1}")
    y = matrix[:, idx]
    x = np.delete(matrix, idx, axis=1)
    names = [h for i, h in enumerate(header) if i != idx]
    return x, y, names, header[idx]


def _run_path(config: CliConfig) -> tuple[PathResult, list[str]]:
    header, matrix = _read_csv(config.input_path)
    x, y, names, _ = _split_response(header, matrix, config.response_column)
    if x.shape[0] < 10:
        raise DataError(f"need at least 10 data rows, found {x.shape[0]}")
    if x.shape[1] < 1:
        raise DataError("no predictor columns besides the response")
    try:
        result = fit_path(
            Dataset(x, y, names),
            config=config.fit_config(),
            iota=config.iota,
            grid_size=config.grid_size,
            post_regression=config.post_regression,
            sigma=config.sigma,
        )
    except (DegenerateColumnError, ValueError) as exc:
        raise DataError(str(exc)) from None
    if config.strict:
        selected = result.solutions[result.selected_index]
        if not (result.final_model.converged and selected.converged):
            raise ConvergenceError(
                "selected fit did not converge within max-outer iterations")
    return result, names


def _diagnostics(result: PathResult, config: CliConfig) -> dict:
    final = result.final_model
    return {
        "subcommand": config.subcommand,
        "n_selected": int(np.count_nonzero(final.beta_star)),
        "sigma_hat": _jfloat(result.info.sigma_hat),
        "lambda_opt": _jfloat(result.lambdas[result.selected_index]),
        "selected_index": int(result.selected_index),
        "grid_size": int(result.lambdas.size),
        "post_regression": bool(config.post_regression),
        "final_outer_iterations": int(final.outer_iterations),
        "final_converged": bool(final.converged),
        "final_inner_converged": bool(final.inner_converged),
        "path_converged": bool(all(s.converged for s in result.solutions)),
        "exclusion_waived": bool(result.exclusion_waived),
        "excluded_lambdas": [
            {"lambda": _jfloat(lam), "reason": reason}
            for lam, flagged, reason in zip(result.lambdas, result.excluded,
                                            result.exclusion_reasons)
            if flagged
        ],
    }


def cmd_fit(config: CliConfig) -> int:
    """Fit on CSV data; write coefficients, flagged cells, and diagnostics."""
    result, names = _run_path(config)
    final = result.final_model

    coef_rows = [["(intercept)", _fmt(final.intercept), "", ""]]
    for j, name in enumerate(names):
        coef_rows.append([
            name,
            _fmt(final.beta[j]),
            _fmt(final.beta_star[j]),
            str(int(final.beta_star[j] != 0)),
        ])

    flag_rows = []
    for i, j in np.argwhere(final.delta != 0):
        value = final.delta[i, j]
        flag_rows.append(["x", str(int(i)), names[j], _fmt(value),
                          "high" if value > 0 else "low"])
    for i in np.flatnonzero(final.zeta):
        value = final.zeta[i]
        flag_rows.append(["y", str(int(i)), "", _fmt(value),
                          "high" if value > 0 else "low"])

    os.makedirs(config.output_dir, exist_ok=True)
    _write_csv(os.path.join(config.output_dir, "coefficients.csv"),
               ["variable", "beta_raw", "beta_standardized", "selected"], coef_rows)
    _write_csv(os.path.join(config.output_dir, "cellflags.csv"),
               ["kind", "row", "column", "value", "direction"], flag_rows)
    _atomic_write(os.path.join(config.output_dir, "diagnostics.json"),
                  lambda fh: json.dump(_diagnostics(result, config), fh,
                                       indent=2, sort_keys=True))
    return 0


def cmd_path(config: CliConfig) -> int:
    """Export the per-penalty table of one path run."""
    result, _ = _run_path(config)
    rows = []
    for i, lam in enumerate(result.lambdas):
        solution = result.solutions[i]
        rows.append([
            _fmt(lam),
            _fmt(result.bic[i]),
            str(int(np.count_nonzero(solution.beta_star))),
            str(int(result.excluded[i])),
            result.exclusion_reasons[i] or "",
            str(int(solution.outer_iterations)),
            str(int(solution.converged)),
        ])
    os.makedirs(config.output_dir, exist_ok=True)
    _write_csv(os.path.join(config.output_dir, "path.csv"),
               ["lambda", "bic", "n_active", "excluded", "reason",
                "outer_iterations", "converged"], rows)
    _atomic_write(os.path.join(config.output_dir, "diagnostics.json"),
                  lambda fh: json.dump(_diagnostics(result, config), fh,
                                       indent=2, sort_keys=True))
    return 0


def cmd_screen(config: CliConfig) -> int:
    """Keep the k predictors most correlated with the response."""
    header, matrix = _read_csv(config.input_path)
    x, y, names, response_name = _split_response(header, matrix, config.response_column)
    p = x.shape[1]
    if config.k is None or config.k < 1:
        raise UsageError("--k must be a positive integer")
    if config.k > p:
        raise UsageError(f"--k ({config.k}) exceeds the number of predictors ({p})")
    if config.log_transform:
        bad = [names[j] for j in range(p) if np.any(x[:, j] <= 0)]
        if bad:
            raise DataError(
                "log transform requires strictly positive predictors; "
                "offending column(s): " + ", ".join(bad))
        x = np.log(x)
    try:
        correlations = np.array(
            [winsorized_correlation(x[:, j], y, clip=config.eta) for j in range(p)])
    except ValueError as exc:
        raise DataError(str(exc)) from None
    order = np.argsort(-np.abs(correlations), kind="stable")[: config.k]

    map_rows = [
        [str(rank), str(int(j)), names[j], _fmt(correlations[j])]
        for rank, j in enumerate(order)
    ]
    screened_header = [names[j] for j in order] + [response_name]
    screened_rows = [
        [_fmt(v) for v in x[i, order]] + [_fmt(y[i])] for i in range(x.shape[0])
    ]
    os.makedirs(config.output_dir, exist_ok=True)
    _write_csv(os.path.join(config.output_dir, "screened.csv"),
               screened_header, screened_rows)
    _write_csv(os.path.join(config.output_dir, "screen_map.csv"),
               ["rank", "column_index", "column_name", "winsorized_correlation"],
               map_rows)
    return 0


_SCENARIO_FIELDS = {
    "n": int, "p": int, "n_active": int, "rho": float, "sigma_eps": float,
    "intercept": float, "e": float, "gamma": float, "seed": int,
}


def _parse_bool(text: str, field: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise DataError(f"scenario field '{field}': expected a boolean, got '{text}'")


def _parse_scenarios(path, default_seed: int):
    """Parse the flat key=value scenario file, one scenario per blank-line
    separated block. Returns (name, scenario, replicates, methods) tuples."""
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise DataError(f"cannot read scenario file {path}: {exc}") from None

    blocks: list[list[tuple[int, str]]] = [[]]
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            if blocks[-1]:
                blocks.append([])
            continue
        if stripped.startswith("#"):
            continue
        blocks[-1].append((lineno, stripped))
    blocks = [b for b in blocks if b]
    if not blocks:
        raise DataError(f"no scenarios found in {path}")

    parsed = []
    for index, block in enumerate(blocks):
        fields: dict[str, object] = {}
        name = f"scenario{index}"
        replicates = 50
        methods = ["cr_lasso", "lasso"]
        for lineno, line in block:
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value', got '{line}'")
            key, _, raw = line.partition("=")
            key = key.strip().lower()
            raw = raw.strip()
            if key == "name":
                name = raw
            elif key == "replicates":
                replicates = int(raw)
            elif key == "methods":
                methods = [m.strip() for m in raw.split(",") if m.strip()]
                bad = [m for m in methods if m not in METHODS]
                if bad:
                    raise DataError(
                        f"scenario field 'methods': unknown method(s) {bad}; "
                        f"choose from {list(METHODS)}")
            elif key == "dist":
                fields["predictor_dist"] = raw
            elif key == "mode":
                fields["mode"] = raw
            elif key == "contaminate_response":
                fields["contaminate_response"] = _parse_bool(raw, key)
            elif key in _SCENARIO_FIELDS:
                try:
                    fields[key] = _SCENARIO_FIELDS[key](raw)
                except ValueError:
                    raise DataError(
                        f"scenario field '{key}': invalid value '{raw}'") from None
            else:
                raise DataError(f"{path}:{lineno}: unknown scenario field '{key}'")
        for required in ("n", "p"):
            if required not in fields:
                raise DataError(f"scenario '{name}': missing required field '{required}'")
        fields.setdefault("seed", default_seed)
        try:
            scenario = SimulationScenario(**fields)
        except (TypeError, ValueError) as exc:
            raise DataError(f"scenario '{name}': {exc}") from None
        if replicates < 1:
            raise DataError(f"scenario '{name}': replicates must be positive")
        parsed.append((name, scenario, replicates, methods))
    return parsed


def cmd_simulate(config: CliConfig) -> int:
    """Run every scenario in the file; write per-scenario metrics plus a summary."""
    scenarios = _parse_scenarios(config.scenario_path, config.seed)
    results = []
    for name, scenario, replicates, methods in scenarios:
        rows = run_experiment(scenario, methods=methods, replicates=replicates,
                              base_seed=scenario.seed, grid_size=config.grid_size,
                              iota=config.iota)
        results.append((name, rows))

    os.makedirs(config.output_dir, exist_ok=True)
    summary_rows = []
    for name, rows in results:
        _write_csv(os.path.join(config.output_dir, f"metrics_{name}.csv"),
                   ["replicate", "method", "metric", "value"],
                   [[str(rep), method, metric, _fmt(value)]
                    for rep, method, metric, value in rows])
        for method, metric, mean, sd in summarize_metrics(rows):
            summary_rows.append([name, method, metric, _fmt(mean), _fmt(sd)])
    _write_csv(os.path.join(config.output_dir, "summary.csv"),
               ["scenario", "method", "metric", "mean", "sd"], summary_rows)
    return 0


def _add_data_options(parser) -> None:
    parser.add_argument("--input", required=True, help="input CSV with a header row")
    parser.add_argument("--response", required=True,
                        help="response column name or 0-based index")
    parser.add_argument("--out-dir", default=".", help="output directory")


def _add_fit_options(parser) -> None:
    parser.add_argument("--eta", type=float, default=DEFAULT_ETA,
                        help="cell penalty (default %(default)s)")
    parser.add_argument("--theta", type=float, default=DEFAULT_THETA,
                        help="response penalty (default %(default)s)")
    parser.add_argument("--sigma", type=float, default=None,
                        help="override the residual scale estimate")
    parser.add_argument("--iota", type=float, default=0.001,
                        help="smallest penalty as a fraction of the largest")
    parser.add_argument("--grid-size", type=int, default=50,
                        help="number of penalty values (default %(default)s)")
    parser.add_argument("--eps1", type=float, default=1e-6,
                        help="inner convergence tolerance")
    parser.add_argument("--eps2", type=float, default=1e-3,
                        help="outer convergence tolerance")
    parser.add_argument("--max-outer", type=int, default=50,
                        help="outer iteration cap (default %(default)s)")
    parser.add_argument("--strict", action="store_true",
                        help="exit with code 4 when the selected fit did not converge")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellreg",
                     description="Robust sparse regression with cellwise outlier detection")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    fit = sub.add_parser("fit", help="fit a model on CSV data")
    _add_data_options(fit)
    _add_fit_options(fit)
    fit.add_argument("--no-post", action="store_true",
                     help="skip the unpenalized refit on the selected support")

    path = sub.add_parser("path", help="export the penalty-path table")
    _add_data_options(path)
    _add_fit_options(path)

    screen = sub.add_parser("screen", help="keep the predictors most correlated with the response")
    _add_data_options(screen)
    screen.add_argument("--k", type=int, required=True, help="number of predictors to keep")
    screen.add_argument("--log", action="store_true",
                        help="log-transform predictors first (requires positive data)")
    screen.add_argument("--eta", type=float, default=DEFAULT_ETA,
                        help="winsorization threshold (default %(default)s)")

    simulate = sub.add_parser("simulate", help="run scenario-file experiments")
    simulate.add_argument("--scenarios", required=True, help="scenario definition file")
    simulate.add_argument("--out-dir", default=".", help="output directory")
    simulate.add_argument("--seed", type=int, default=0,
                          help="base seed for scenarios that do not set one")
    simulate.add_argument("--grid-size", type=int, default=50)
    simulate.add_argument("--iota", type=float, default=0.001)
    return parser


def _config_from(args) -> CliConfig:
    config = CliConfig(
        subcommand=args.subcommand,
        input_path=getattr(args, "input", None),
        response_column=getattr(args, "response", None),
        eta=getattr(args, "eta", DEFAULT_ETA),
        theta=getattr(args, "theta", DEFAULT_THETA),
        sigma=getattr(args, "sigma", None),
        iota=getattr(args, "iota", 0.001),
        grid_size=getattr(args, "grid_size", 50),
        eps1=getattr(args, "eps1", 1e-6),
        eps2=getattr(args, "eps2", 1e-3),
        max_outer=getattr(args, "max_outer", 50),
        seed=getattr(args, "seed", 0),
        output_dir=getattr(args, "out_dir", "."),
        k=getattr(args, "k", None),
        log_transform=getattr(args, "log", False),
        post_regression=not getattr(args, "no_post", False),
        strict=getattr(args, "strict", False),
        scenario_path=getattr(args, "scenarios", None),
    )
    if not 0 < config.iota < 1:
        raise UsageError("--iota must lie strictly between 0 and 1")
    if config.grid_size < 2:
        raise UsageError("--grid-size must be at least 2")
    if config.sigma is not None and not config.sigma > 0:
        raise UsageError("--sigma must be strictly positive")
    config.fit_config()  # validate numeric options eagerly
    return config


_HANDLERS = {"fit": cmd_fit, "path": cmd_path, "screen": cmd_screen,
             "simulate": cmd_simulate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _HANDLERS[args.subcommand](_config_from(args))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 4


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
