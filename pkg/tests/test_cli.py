import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cellreg.cli import main
from cellreg.robust import Dataset
from cellreg.selection import fit_path
from cellreg.simlab import SimulationScenario, generate


def write_dataset_csv(path, x, y, names=None, response="y"):
    names = names or [f"x{j}" for j in range(x.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(names + [response])
        for i in range(x.shape[0]):
            writer.writerow([repr(float(v)) for v in x[i]] + [repr(float(y[i]))])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def clean_instance():
    return generate(SimulationScenario(n=120, p=10, n_active=3, e=0.0,
                                       gamma=8.0, seed=31))


@pytest.fixture(scope="module")
def clean_csv(clean_instance, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "clean.csv"
    write_dataset_csv(path, clean_instance.x_contaminated,
                      clean_instance.y_contaminated)
    return path


class TestFitCommand:
    def test_outputs_written(self, clean_csv, tmp_path):
        out = tmp_path / "fit"
        code = main(["fit", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "20"])
        assert code == 0
        header, rows = read_csv(out / "coefficients.csv")
        assert header == ["variable", "beta_raw", "beta_standardized", "selected"]
        assert rows[0][0] == "(intercept)"
        assert len(rows) == 11  # intercept + ten predictors
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["sigma_hat"] > 0
        assert diag["lambda_opt"] > 0
        assert diag["post_regression"] is True

    def test_false_flag_rate_on_clean_data(self, clean_csv, tmp_path):
        out = tmp_path / "flags"
        assert main(["fit", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "20"]) == 0
        _, rows = read_csv(out / "cellflags.csv")
        x_flags = [r for r in rows if r[0] == "x"]
        assert len(x_flags) < 0.02 * 120 * 10  # about the 1% two-sided tail

    def test_planted_cell_detected(self, tmp_path):
        hits = 0
        seeds = range(50)
        for seed in seeds:
            inst = generate(SimulationScenario(n=100, p=8, n_active=3, e=0.0,
                                               seed=800 + seed))
            x = inst.x_clean.copy()
            x[17, 1] += 8.0  # gross cell in an active predictor
            data = tmp_path / f"planted{seed}.csv"
            write_dataset_csv(data, x, inst.y_clean)
            out = tmp_path / f"out{seed}"
            assert main(["fit", "--input", str(data), "--response", "y",
                         "--out-dir", str(out), "--grid-size", "15"]) == 0
            _, rows = read_csv(out / "cellflags.csv")
            hits += any(r[0] == "x" and r[1] == "17" and r[2] == "x1" for r in rows)
        assert hits >= 45  # detected in >= 90% of 50 seeds

    def test_matches_library_fit(self, clean_instance, clean_csv, tmp_path):
        out = tmp_path / "roundtrip"
        assert main(["fit", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "20"]) == 0
        result = fit_path(Dataset(clean_instance.x_contaminated,
                                  clean_instance.y_contaminated),
                          grid_size=20)
        _, rows = read_csv(out / "coefficients.csv")
        assert float(rows[0][1]) == float(f"{result.final_model.intercept:.10g}")
        for j, row in enumerate(rows[1:]):
            assert float(row[1]) == float(f"{result.final_model.beta[j]:.10g}")

    def test_byte_stable_outputs(self, clean_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["fit", "--input", str(clean_csv), "--response", "y",
                         "--out-dir", str(out), "--grid-size", "15"]) == 0
        for name in ("coefficients.csv", "cellflags.csv", "diagnostics.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_empty_csv_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "empty.csv"
        bad.write_text("")
        code = main(["fit", "--input", str(bad), "--response", "y",
                     "--out-dir", str(tmp_path)])
        assert code == 3
        assert "empty.csv" in capsys.readouterr().err

    def test_non_numeric_cell_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,y\n1.0,2.0\noops,3.0\n")
        code = main(["fit", "--input", str(bad), "--response", "y",
                     "--out-dir", str(tmp_path)])
        assert code == 3
        err = capsys.readouterr().err
        assert ":3:" in err and "oops" in err

    def test_missing_value_rejected(self, tmp_path, capsys):
        bad = tmp_path / "gap.csv"
        bad.write_text("a,y\n1.0,2.0\n,3.0\n")
        assert main(["fit", "--input", str(bad), "--response", "y",
                     "--out-dir", str(tmp_path)]) == 3
        assert "missing value" in capsys.readouterr().err

    def test_too_few_rows_rejected(self, tmp_path):
        small = tmp_path / "small.csv"
        small.write_text("a,y\n" + "\n".join("1.0,2.0" for _ in range(5)) + "\n")
        assert main(["fit", "--input", str(small), "--response", "y",
                     "--out-dir", str(tmp_path)]) == 3

    def test_degenerate_column_named(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 2))
        x[:, 1] = 5.0
        data = tmp_path / "degenerate.csv"
        write_dataset_csv(data, x, rng.normal(size=30), names=["good", "flat"])
        assert main(["fit", "--input", str(data), "--response", "y",
                     "--out-dir", str(tmp_path)]) == 3
        assert "flat" in capsys.readouterr().err

    def test_strict_convergence_exit_code(self, tmp_path):
        # two-point grid: the strong-signal fit wins the selection but cannot
        # stabilize within a single outer iteration
        inst = generate(SimulationScenario(n=60, p=6, n_active=2, sigma_eps=0.5,
                                           e=0.0, seed=77))
        data = tmp_path / "hard.csv"
        write_dataset_csv(data, inst.x_contaminated, inst.y_contaminated)
        out = tmp_path / "strict"
        code = main(["fit", "--input", str(data), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "2",
                     "--max-outer", "1", "--strict"])
        assert code == 4
        assert not (out / "coefficients.csv").exists()  # no partial outputs
        relaxed = main(["fit", "--input", str(data), "--response", "y",
                        "--out-dir", str(out), "--grid-size", "2",
                        "--max-outer", "1"])
        assert relaxed == 0

    def test_response_by_index(self, clean_csv, tmp_path):
        out_name, out_idx = tmp_path / "byname", tmp_path / "byindex"
        for out, response in ((out_name, "y"), (out_idx, "10")):
            assert main(["fit", "--input", str(clean_csv), "--response", response,
                         "--out-dir", str(out), "--grid-size", "12"]) == 0
        assert (out_name / "coefficients.csv").read_bytes() == \
            (out_idx / "coefficients.csv").read_bytes()

    def test_no_post_flag(self, clean_csv, tmp_path):
        out = tmp_path / "nopost"
        assert main(["fit", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "15", "--no-post"]) == 0
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["post_regression"] is False


class TestPathCommand:
    def test_path_table(self, clean_csv, tmp_path):
        out = tmp_path / "path"
        assert main(["path", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(out), "--grid-size", "12"]) == 0
        header, rows = read_csv(out / "path.csv")
        assert header == ["lambda", "bic", "n_active", "excluded", "reason",
                          "outer_iterations", "converged"]
        assert len(rows) == 12
        lams = [float(r[0]) for r in rows]
        assert lams == sorted(lams, reverse=True)
        assert rows[0][2] == "0"  # null model at the top of the path


class TestScreenCommand:
    def test_screen_outputs(self, clean_csv, tmp_path):
        out = tmp_path / "screen"
        assert main(["screen", "--input", str(clean_csv), "--response", "y",
                     "--k", "4", "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "screened.csv")
        assert len(header) == 5 and header[-1] == "y"
        assert len(rows) == 120
        map_header, map_rows = read_csv(out / "screen_map.csv")
        assert map_header == ["rank", "column_index", "column_name",
                              "winsorized_correlation"]
        magnitudes = [abs(float(r[3])) for r in map_rows]
        assert magnitudes == sorted(magnitudes, reverse=True)

    def test_k_equal_p_reorders_everything(self, clean_csv, tmp_path):
        out = tmp_path / "screen_all"
        assert main(["screen", "--input", str(clean_csv), "--response", "y",
                     "--k", "10", "--out-dir", str(out)]) == 0
        _, map_rows = read_csv(out / "screen_map.csv")
        assert sorted(int(r[1]) for r in map_rows) == list(range(10))

    def test_k_too_large_is_usage_error(self, clean_csv, tmp_path):
        assert main(["screen", "--input", str(clean_csv), "--response", "y",
                     "--k", "11", "--out-dir", str(tmp_path)]) == 2

    def test_log_on_nonpositive_data_lists_columns(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        x = np.abs(rng.normal(size=(40, 3))) + 0.1
        x[5, 2] = -1.0
        data = tmp_path / "neg.csv"
        write_dataset_csv(data, x, rng.normal(size=40), names=["a", "b", "c"])
        assert main(["screen", "--input", str(data), "--response", "y",
                     "--k", "2", "--log", "--out-dir", str(tmp_path)]) == 3
        assert "c" in capsys.readouterr().err

    def test_screen_retains_actives(self, tmp_path):
        hits = 0
        for seed in range(50):
            inst = generate(SimulationScenario(n=200, p=50, e=0.0, seed=7000 + seed))
            data = tmp_path / f"screen{seed}.csv"
            write_dataset_csv(data, inst.x_clean, inst.y_clean)
            out = tmp_path / f"sout{seed}"
            assert main(["screen", "--input", str(data), "--response", "y",
                         "--k", "20", "--out-dir", str(out)]) == 0
            _, map_rows = read_csv(out / "screen_map.csv")
            kept = {int(r[1]) for r in map_rows}
            hits += set(range(10)) <= kept
        assert hits >= 45


class TestSimulateCommand:
    SCENARIO_TEXT = """\
# smoke scenario
name = smoke
n = 60
p = 8
n_active = 2
e = 0.1
gamma = 8
replicates = 2
seed = 5
methods = cr_lasso,lasso
"""

    def test_simulate_deterministic(self, tmp_path):
        scen = tmp_path / "scenarios.txt"
        scen.write_text(self.SCENARIO_TEXT)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        for out in (out1, out2):
            assert main(["simulate", "--scenarios", str(scen),
                         "--out-dir", str(out), "--grid-size", "12"]) == 0
        for name in ("metrics_smoke.csv", "summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        header, rows = read_csv(out1 / "metrics_smoke.csv")
        assert header == ["replicate", "method", "metric", "value"]
        assert {r[1] for r in rows} == {"cr_lasso", "lasso"}

    def test_two_blocks(self, tmp_path):
        scen = tmp_path / "two.txt"
        scen.write_text(self.SCENARIO_TEXT + "\nname = other\nn = 50\np = 6\n"
                        "n_active = 2\nreplicates = 1\nseed = 9\n")
        out = tmp_path / "two_out"
        assert main(["simulate", "--scenarios", str(scen), "--out-dir", str(out),
                     "--grid-size", "10"]) == 0
        assert (out / "metrics_smoke.csv").exists()
        assert (out / "metrics_other.csv").exists()
        _, summary = read_csv(out / "summary.csv")
        assert {r[0] for r in summary} == {"smoke", "other"}

    def test_malformed_scenario_field(self, tmp_path, capsys):
        scen = tmp_path / "bad.txt"
        scen.write_text("name = broken\nn = 60\np = 8\nwibble = 3\n")
        assert main(["simulate", "--scenarios", str(scen),
                     "--out-dir", str(tmp_path)]) == 3
        assert "wibble" in capsys.readouterr().err

    def test_invalid_scenario_value(self, tmp_path, capsys):
        scen = tmp_path / "bad2.txt"
        scen.write_text("name = broken\nn = 60\np = 8\ne = 1.5\n")
        assert main(["simulate", "--scenarios", str(scen),
                     "--out-dir", str(tmp_path)]) == 3
        assert "e must lie" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_subcommand(self):
        assert main(["explode"]) == 2

    def test_missing_required_flag(self):
        assert main(["fit", "--response", "y"]) == 2

    def test_bad_iota(self, clean_csv, tmp_path):
        assert main(["fit", "--input", str(clean_csv), "--response", "y",
                     "--out-dir", str(tmp_path), "--iota", "2.0"]) == 2

    def test_console_entry_point(self, clean_csv, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "cellreg.cli", "fit", "--input",
             str(clean_csv), "--response", "y", "--out-dir",
             str(tmp_path / "sub"), "--grid-size", "10"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        proc = subprocess.run([sys.executable, "-m", "cellreg.cli"],
                              capture_output=True, text=True)
        assert proc.returncode == 2
