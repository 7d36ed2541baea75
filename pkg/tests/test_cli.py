import json
import os

import numpy as np
import pytest

from qvelab.cli import main


def run(args):
    return main(args)


class TestDensityCommand:
    def test_csv_matches_closed_form(self, tmp_path):
        out = tmp_path / "dens.csv"
        code = run(
            [
                "density",
                "--semicircle",
                "4",
                "--grid",
                "-3:3:0.1",
                "--eta",
                "1e-5",
                "-o",
                str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["tau", "eta", "avg_density"]
        assert header[3:7] == ["v_0", "v_1", "v_2", "v_3"]
        assert header[-2:] == ["residual", "converged"]
        rows = [ln.split(",") for ln in lines[1:]]
        taus = np.array([float(r[0]) for r in rows])
        dens = np.array([float(r[2]) for r in rows])
        rho = np.sqrt(np.maximum(0.0, 4.0 - taus**2)) / (2 * np.pi)
        bulk = np.abs(taus) <= 1.9
        assert np.max(np.abs(dens[bulk] - rho[bulk])) < 1e-3

    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["density", "--semicircle", "2", "--grid", "-1:1:0.25",
                "--eta", "1e-3", "-o"]
        assert run(argv + [str(a)]) == 0
        assert run(argv + [str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        ma = json.loads((tmp_path / "a.csv.manifest.json").read_text())
        mb = json.loads((tmp_path / "b.csv.manifest.json").read_text())
        assert ma["model_hash"] == mb["model_hash"]

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["density", "--semicircle", "2", "--grid", "-1:1:0.25",
                "--eta", "1e-3"]
        assert run(base + ["--threads", "1", "-o", str(a)]) == 0
        assert run(base + ["--threads", "3", "-o", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_model_file_is_validation_error(self, tmp_path):
        code = run(
            ["density", "--model", str(tmp_path / "nope.json"), "--grid", "0:1:0.5"]
        )
        assert code == 2

    def test_bad_grid_spec(self):
        assert run(["density", "--semicircle", "2", "--grid", "abc"]) == 2


class TestShapeCommand:
    def test_two_block_cusp_classified(self, tmp_path):
        out = tmp_path / "shape.json"
        code = run(
            [
                "shape",
                "--two-block",
                "3",
                "0.0153846",
                "2",
                "--grid",
                "1.8:2.06:0.002",
                "--eta",
                "1e-6",
                "-o",
                str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        kinds = {p["kind"] for p in payload["points"]}
        assert "cusp" in kinds
        cusp = next(p for p in payload["points"] if p["kind"] == "cusp")
        assert abs(cusp["tau0"] - 1.9335) < 0.01


class TestScaleCommand:
    def test_unique_scaling_exit_zero(self, capsys):
        assert run(["scale", "--semicircle", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "unique"

    def test_not_scalable_exit_three(self, capsys):
        assert run(["scale", "--two-block", "3", "0.6", "4"]) == 3
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "not_scalable"


class TestModelFile:
    def test_model_roundtrip_through_file(self, tmp_path, capsys):
        model_file = tmp_path / "model.json"
        model_file.write_text(
            json.dumps(
                {
                    "n": 2,
                    "a": [0.0, 0.0],
                    "S": [[0.0, 3.0], [3.0, 1.0]],
                    "weights": [0.5, 0.5],
                }
            )
        )
        code = run(
            ["solve", "--model", str(model_file), "--tau", "0.0", "--eta", "1.0"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["residual"] < 1e-12


class TestRmtCommand:
    def test_seed_recorded_and_outputs_written(self, tmp_path):
        out = tmp_path / "rmt.json"
        eig = tmp_path / "eig.csv"
        code = run(
            [
                "rmt",
                "--semicircle",
                "1",
                "--size",
                "200",
                "--seed",
                "9",
                "--grid",
                "-3:3:0.05",
                "--eigenvalues-out",
                str(eig),
                "-o",
                str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["seed"] == 9
        assert payload["kolmogorov_distance"] < 0.2
        assert eig.read_text().startswith("eigenvalue\n")
        manifest = json.loads((tmp_path / "rmt.json.manifest.json").read_text())
        assert str(eig) in manifest["outputs"]


class TestReportCommand:
    def test_report_contains_structural_and_shape(self, tmp_path):
        out = tmp_path / "report.json"
        code = run(
            [
                "report",
                "--semicircle",
                "2",
                "--grid",
                "-2.6:2.6:0.02",
                "--eta",
                "1e-5",
                "-o",
                str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["structural"]["sigma_bound"] == 2.0
        assert payload["structural"]["fid"] is True
        assert abs(payload["density_mass"] - 1.0) < 0.02
        assert len(payload["shape"]["intervals"]) == 1


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
