import json

import numpy as np
import pytest

from saddlemap import cli
from saddlemap.geometry import ChristoffelSymbols, christoffel


def write_config(tmp_path, **overrides):
    cfg = {
        "problem": "sphere",
        "mode": "learned_chart",
        "output_dir": str(tmp_path / "out"),
        "driver": {
            "n_iterations_max": 2,
            "n_ode_steps": 60,
            "seed": 7,
            "sampler": {"n_samples": 300},
        },
    }
    for key, value in overrides.items():
        if key in ("n_iterations_max", "n_ode_steps", "ode_dt", "seed", "tol_force"):
            cfg["driver"][key] = value
        else:
            cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestRunCommand:
    def test_outputs_and_exit_code(self, tmp_path):
        code = cli.main(["run", str(write_config(tmp_path))])
        assert code == 2  # parked at the sink, hits the iteration cap
        out = tmp_path / "out"
        for name in ("trajectory.csv", "summary.json", "error.csv"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["verdict"] == "max_iterations"
        assert summary["iterations"] == 2

    def test_csv_consistency(self, tmp_path):
        cli.main(["run", str(write_config(tmp_path))])
        out = tmp_path / "out"
        rows = (out / "trajectory.csv").read_text().strip().split("\n")
        header = rows[0].split(",")
        assert header[:2] == ["iteration", "step"]
        assert "energy" in header and "force_norm" in header and "lambda_min" in header
        summary = json.loads((out / "summary.json").read_text())
        iters_in_csv = {int(r.split(",")[0]) for r in rows[1:]}
        assert len(iters_in_csv) == summary["iterations"]
        err_rows = (out / "error.csv").read_text().strip().split("\n")
        assert len(err_rows) == 1 + summary["iterations"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        cli.main(["run", str(cfg)])
        names = ("trajectory.csv", "summary.json", "error.csv")
        first = {n: (tmp_path / "out" / n).read_bytes() for n in names}
        cli.main(["run", str(cfg)])
        for n in names:
            assert (tmp_path / "out" / n).read_bytes() == first[n]

    def test_invalid_dt_exits_1_without_outputs(self, tmp_path, capsys):
        code = cli.main(["run", str(write_config(tmp_path, ode_dt=-1.0))])
        assert code == 1
        assert not (tmp_path / "out").exists()
        assert "invalid config" in capsys.readouterr().err

    def test_unknown_problem_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"problem": "torus", "output_dir": str(tmp_path / "o")}))
        assert cli.main(["run", str(path)]) == 1

    def test_exact_chart_mode_only_for_sphere(self, tmp_path):
        code = cli.main(["run", str(write_config(tmp_path, problem="mb_surface", mode="exact_chart"))])
        assert code == 1

    def test_exact_chart_run(self, tmp_path):
        cfg = write_config(tmp_path, mode="exact_chart")
        assert cli.main(["run", str(cfg)]) == 2
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["mode"] == "exact_chart"


class TestValidateGeometry:
    def test_analytic_paths_pass(self, tmp_path):
        report_path = tmp_path / "report.json"
        code = cli.main(["validate-geometry", "--n", "100", "--seed", "0",
                         "--output", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["passed"]
        assert report["errors"]["metric_analytic"] < 1e-6
        assert report["errors"]["christoffel_analytic"] < 1e-6
        assert report["errors"]["christoffel_fd"] < 1e-4
        assert report["errors"]["hessian_fd"] < 1e-4

    def test_corrupted_christoffel_detected(self):
        # mutation fixture: drop the 1/2 factor of the connection formula
        def corrupted(metric_field, u, fd_step=1e-5, metric_jacobian=None):
            out = christoffel(metric_field, u, fd_step=fd_step, metric_jacobian=metric_jacobian)
            return ChristoffelSymbols(gamma=2.0 * out.gamma)

        result = cli.validate_geometry(25, seed=1, christoffel_fn=corrupted)
        assert not result["passed"]
        assert result["errors"]["christoffel_analytic"] > 1e-4

    def test_zero_points_vacuous_pass(self):
        assert cli.main(["validate-geometry", "--n", "0", "--seed", "0"]) == 0


class TestOracleCommand:
    def test_sphere_report(self, tmp_path):
        out = tmp_path / "sphere.json"
        assert cli.main(["oracle", "sphere", "--output", str(out)]) == 0
        report = json.loads(out.read_text())
        assert len(report["points"]) == 14

    def test_mb_report(self, tmp_path):
        out = tmp_path / "mb.json"
        assert cli.main(["oracle", "mb_surface", "--output", str(out)]) == 0
        report = json.loads(out.read_text())
        assert len(report["points"]) == 5
        assert report["indices"].count(1) == 2

    def test_unknown_problem(self, capsys):
        assert cli.main(["oracle", "klein_bottle"]) == 1
        assert "unknown problem" in capsys.readouterr().err
