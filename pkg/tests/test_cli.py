"""End-to-end tests of the command-line interface and its artifacts."""

import csv
import json
from dataclasses import fields

import numpy as np
import pytest

from sqsdp import cli, solver
from sqsdp.cli import main

NO_REFERENCE_TOML = """
format_version = 1
id = "no-ref"

[dims]
n = 1
m = 0
d = 1

[objective]
"2" = 1.0

[matrix."1 1"]
"1" = 1.0
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSolve:
    def test_registry_solve_artifacts(self, tmp_path):
        out = tmp_path / "run"
        code = main(["solve", "scalar-degenerate", "--perturb", "1e-2",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        rows = read_csv(out / "run.csv")
        assert list(rows[0].keys()) == cli.CSV_COLUMNS
        assert float(rows[-1]["sigma"]) <= 1e-10
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "kkt_reached"
        assert report["problem"] == "scalar-degenerate"

    def test_config_echo_complete(self, tmp_path):
        out = tmp_path / "run"
        main(["solve", "affine-qsdp", "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        for f in fields(solver.SolverConfig):
            assert f.name in report["config"], f.name

    def test_max_iters_zero(self, tmp_path):
        code = main(["solve", "affine-qsdp", "--max-iters", "0",
                     "--perturb", "1e-2", "--out", str(tmp_path / "a")])
        assert code == 2
        # starting exactly at the reference point still terminates
        code2 = main(["solve", "affine-qsdp", "--max-iters", "0", "--perturb", "0",
                      "--x0", "1,0", "--y0", "1", "--Z0", "0,0,0,1",
                      "--out", str(tmp_path / "b")])
        assert code2 == 0

    def test_unknown_problem_lists_ids(self, tmp_path, capsys):
        code = main(["solve", "nope", "--out", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert "scalar-degenerate" in err

    def test_byte_identical_reruns(self, tmp_path):
        args = ["solve", "curved-3x3", "--perturb", "1e-2", "--seed", "7"]
        main(args + ["--out", str(tmp_path / "one")])
        main(args + ["--out", str(tmp_path / "two")])
        a = (tmp_path / "one" / "run.csv").read_bytes()
        b = (tmp_path / "two" / "run.csv").read_bytes()
        assert a == b

    def test_solve_from_file(self, tmp_path):
        problem_file = tmp_path / "noref.toml"
        problem_file.write_text(NO_REFERENCE_TOML)
        code = main(["solve", str(problem_file), "--x0", "0.5",
                     "--out", str(tmp_path / "out")])
        assert code == 0

    def test_file_without_reference_needs_explicit_start(self, tmp_path, capsys):
        problem_file = tmp_path / "noref.toml"
        problem_file.write_text(NO_REFERENCE_TOML)
        code = main(["solve", str(problem_file), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "reference" in capsys.readouterr().err

    def test_bad_initial_dims(self, tmp_path, capsys):
        code = main(["solve", "affine-qsdp", "--x0", "1,2,3",
                     "--out", str(tmp_path)])
        assert code == 1


class TestBench:
    def test_small_bench_passes_gate(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["bench", "--trials", "3", "--seed", "0", "--jobs", "2",
                     "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "bench_summary.json").read_text())
        assert summary["gate_failures"] == []
        table = summary["table"]
        assert {row["problem"] for row in table} == {
            "scalar-degenerate", "nondegenerate-2x2", "beta-2x2",
            "affine-qsdp", "curved-3x3",
        }
        for row in table:
            assert row["converged"] == row["trials"]
        rows = read_csv(out / "bench_summary.csv")
        assert rows and "rate_class" in rows[0]

    def test_perturbed_hessian_suite_runs(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["bench", "--trials", "2", "--radii", "5e-2",
                     "--hessian", "perturbed:0.5", "--out", str(out)])
        assert code == 0  # the quadratic gate applies to exact-Hessian runs only
        summary = json.loads((out / "bench_summary.json").read_text())
        classes = {row["rate_class"] for row in summary["table"]}
        assert "quadratic" not in classes

    def test_empty_suite_errors(self, tmp_path, capsys):
        code = main(["bench", "--suite", "bogus-tag", "--out", str(tmp_path)])
        assert code == 1

    def test_deterministic_summary(self, tmp_path):
        args = ["bench", "--trials", "2", "--radii", "1e-2", "--seed", "3"]
        main(args + ["--out", str(tmp_path / "one")])
        main(args + ["--jobs", "1", "--out", str(tmp_path / "two")])
        a = (tmp_path / "one" / "bench_summary.csv").read_bytes()
        b = (tmp_path / "two" / "bench_summary.csv").read_bytes()
        assert a == b


class TestProbe:
    def test_spectrum_reports_degeneracy(self, tmp_path, capsys):
        out = tmp_path / "probe"
        code = main(["probe", "scalar-degenerate", "--what", "spectrum",
                     "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "probe_spectrum.json").read_text())
        assert payload["part_sizes"] == [0, 1, 0]
        assert payload["strict_complementarity"] is False

    def test_sosc_probe_positive(self, tmp_path):
        out = tmp_path / "probe"
        code = main(["probe", "nondegenerate-2x2", "--what", "sosc", "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "probe_sosc.json").read_text())
        assert payload["sosc_min_curvature"] > 1e-6

    def test_probe_without_reference_errors(self, tmp_path, capsys):
        problem_file = tmp_path / "noref.toml"
        problem_file.write_text(NO_REFERENCE_TOML)
        code = main(["probe", str(problem_file), "--what", "error-bound",
                     "--out", str(tmp_path)])
        assert code == 1
        assert "reference" in capsys.readouterr().err


class TestUsage:
    def test_no_command(self):
        assert main([]) == 1

    def test_bad_hessian_flag(self, tmp_path):
        assert main(["solve", "affine-qsdp", "--hessian", "nonsense",
                     "--out", str(tmp_path)]) == 1
