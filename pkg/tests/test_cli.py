"""End-to-end command-line tests: flags, files, exit codes, invariants.

Each test drives main() in process with an argv list and inspects the
files it leaves behind; nothing here touches the solver internals except
the two plumbing tests that force an LP failure and a curve violation to
pin the corresponding exit codes.
"""

import json
import os

import numpy as np
import pytest

from advrisk import cli
from advrisk.cli import (
    CURVE_HEADER,
    EXIT_BAD_ARGS,
    EXIT_BAD_DATA,
    EXIT_CAP_EXCEEDED,
    EXIT_INVARIANT,
    EXIT_LP_FAILURE,
    EXIT_OK,
    CurveRow,
    main,
)
from advrisk.data import load_csv


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_curve(prefix):
    with open(f"{prefix}_curve.csv", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == CURVE_HEADER
    rows = [line.split(",") for line in lines[1:]]
    with open(f"{prefix}_curve.json", encoding="utf-8") as fh:
        mirror = json.load(fh)
    return rows, mirror


def write_two_point_csv(path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,x1,x2\na,0.0,0.0\nb,2.0,0.0\n")


class TestGenData:
    def test_writes_loadable_csv(self):
        rc = main(["gen-data", "--classes", "3", "--n", "30", "--seed", "7",
                   "--out", "d.csv"])
        assert rc == EXIT_OK
        ds = load_csv("d.csv")
        assert ds.n_points == 30
        assert ds.n_classes == 3
        assert ds.n_features == 2

    def test_same_seed_same_file(self):
        main(["gen-data", "--classes", "3", "--n", "12", "--seed", "1", "--out", "a.csv"])
        main(["gen-data", "--classes", "3", "--n", "12", "--seed", "1", "--out", "b.csv"])
        with open("a.csv", "rb") as fa, open("b.csv", "rb") as fb:
            assert fa.read() == fb.read()

    def test_rejects_one_class(self):
        assert main(["gen-data", "--classes", "1", "--out", "x.csv"]) == EXIT_BAD_ARGS


class TestExhaustive:
    def test_single_eps_one_row(self):
        main(["gen-data", "--classes", "3", "--n", "30", "--seed", "0", "--out", "d.csv"])
        rc = main(["exhaustive", "--data", "d.csv", "--metric", "l2",
                   "--eps", "0.05", "--out", "run"])
        assert rc == EXIT_OK
        rows, mirror = read_curve("run")
        assert len(rows) == 1 and len(mirror) == 1
        assert float(rows[0][0]) == 0.05
        assert rows[0][6] == "true"
        assert os.path.exists("run_manifest.json")

    def test_zero_budget_row(self):
        main(["gen-data", "--classes", "3", "--n", "20", "--seed", "2", "--out", "d.csv"])
        rc = main(["exhaustive", "--data", "d.csv", "--eps", "0", "--out", "z"])
        assert rc == EXIT_OK
        rows, _ = read_curve("z")
        assert float(rows[0][1]) == 0.0
        assert rows[0][3] == "20"
        assert rows[0][4] == "1:20"

    def test_two_point_grid_risks(self):
        write_two_point_csv("two.csv")
        rc = main(["exhaustive", "--data", "two.csv", "--eps", "0.5,1.0", "--out", "tp"])
        assert rc == EXIT_OK
        rows, mirror = read_curve("tp")
        assert [float(r[0]) for r in rows] == [0.5, 1.0]
        assert [float(r[1]) for r in rows] == [0.0, 0.5]
        assert mirror[1]["risk"] == 0.5

    def test_rows_sorted_even_if_grid_is_not(self):
        write_two_point_csv("two.csv")
        main(["exhaustive", "--data", "two.csv", "--eps", "1.0,0.5", "--out", "s"])
        rows, _ = read_curve("s")
        assert [float(r[0]) for r in rows] == [0.5, 1.0]

    def test_monotone_curve_on_synthetic(self):
        rc = main(["exhaustive", "--synthetic", "--classes", "3", "--n", "24",
                   "--seed", "3", "--eps", "0.1,0.3,0.5", "--out", "m"])
        assert rc == EXIT_OK
        rows, _ = read_curve("m")
        risks = [float(r[1]) for r in rows]
        assert risks == sorted(risks)
        counts = [int(r[3]) for r in rows]
        assert counts == sorted(counts)

    def test_parallel_grid(self, monkeypatch):
        monkeypatch.setenv("ADVRISK_THREADS", "2")
        rc = main(["exhaustive", "--synthetic", "--classes", "3", "--n", "18",
                   "--seed", "4", "--eps", "0.1,0.4", "--parallel", "--out", "p"])
        assert rc == EXIT_OK
        rows, _ = read_curve("p")
        assert len(rows) == 2


class TestGenetic:
    def test_trace_files_and_monotone_objective(self):
        rc = main(["genetic", "--synthetic", "--classes", "3", "--n", "24",
                   "--seed", "1", "--eps", "0.4", "--samples", "20",
                   "--stagnation", "6", "--rule-weights", "1:1:0", "--out", "g"])
        assert rc == EXIT_OK
        with open("g_trace_eps0.4.csv", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "elapsed_s,generation,pool_size,objective,risk"
        objs = [float(line.split(",")[3]) for line in lines[1:]]
        assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))
        rows, _ = read_curve("g")
        assert rows[0][6] == "true"  # stagnation stop, not the clock

    def test_reproducible_modulo_elapsed(self):
        args = ["genetic", "--synthetic", "--classes", "3", "--n", "24",
                "--seed", "5", "--eps", "0.3,0.5", "--samples", "16",
                "--stagnation", "5"]
        assert main(args + ["--out", "r1"]) == EXIT_OK
        assert main(args + ["--out", "r2"]) == EXIT_OK
        rows1, _ = read_curve("r1")
        rows2, _ = read_curve("r2")
        strip = lambda rows: [r[:5] + r[6:] for r in rows]
        assert strip(rows1) == strip(rows2)
        with open("r1_manifest.json", encoding="utf-8") as fh:
            m1 = fh.read()
        with open("r2_manifest.json", encoding="utf-8") as fh:
            m2 = fh.read()
        assert m1 == m2


class TestGencolW2:
    def test_curve_reports_and_identity(self):
        rc = main(["gencol-w2", "--synthetic", "--classes", "3", "--n", "15",
                   "--seed", "2", "--tau", "0.5,2.0", "--beta", "3",
                   "--stagnation", "8", "--out", "w"])
        assert rc == EXIT_OK
        rows, mirror = read_curve("w")
        assert [float(r[0]) for r in rows] == [0.5, 2.0]
        for tau in ("0.5", "2.0"):
            with open(f"w_report_tau{tau}.json", encoding="utf-8") as fh:
                rep = json.load(fh)
            assert abs(
                rep["regularized_value"] + rep["penalty_paid"] - rep["corrected_risk"]
            ) <= 1e-10
            assert os.path.exists(f"w_trace_tau{tau}.csv")
        assert all(r[6] in ("true", "false") for r in rows)

    def test_certify_writes_certificate(self):
        rc = main(["certify", "--synthetic", "--classes", "3", "--n", "9",
                   "--seed", "0", "--tau", "5.0", "--stagnation", "10",
                   "--out", "c"])
        assert rc == EXIT_OK
        with open("c_certificate_tau5.0.json", encoding="utf-8") as fh:
            cert = json.load(fh)
        assert cert["certified"] is True
        assert cert["max_violation"] <= 1e-8
        assert cert["converged"] is True


class TestExitCodes:
    def test_missing_grid_is_bad_args(self):
        assert main(["exhaustive", "--synthetic"]) == EXIT_BAD_ARGS

    def test_two_sources_is_bad_args(self):
        write_two_point_csv("two.csv")
        assert main(["exhaustive", "--data", "two.csv", "--synthetic",
                     "--eps", "0.5"]) == EXIT_BAD_ARGS

    def test_duplicate_grid_is_bad_args(self):
        write_two_point_csv("two.csv")
        assert main(["exhaustive", "--data", "two.csv",
                     "--eps", "0.5,0.5"]) == EXIT_BAD_ARGS

    def test_bad_rule_weights_is_bad_args(self):
        write_two_point_csv("two.csv")
        assert main(["genetic", "--data", "two.csv", "--eps", "0.5",
                     "--rule-weights", "1:1"]) == EXIT_BAD_ARGS

    def test_cifar_without_classes_is_bad_args(self):
        assert main(["exhaustive", "--cifar", "x.bin", "--eps", "0.5"]) == EXIT_BAD_ARGS

    def test_bad_threads_env_is_bad_args(self, monkeypatch):
        monkeypatch.setenv("ADVRISK_THREADS", "many")
        write_two_point_csv("two.csv")
        assert main(["exhaustive", "--data", "two.csv", "--eps", "0.5"]) == EXIT_BAD_ARGS

    def test_missing_file_is_bad_data(self):
        assert main(["exhaustive", "--data", "absent.csv",
                     "--eps", "0.5"]) == EXIT_BAD_DATA

    def test_malformed_csv_is_bad_data(self):
        with open("junk.csv", "w", encoding="utf-8") as fh:
            fh.write("label,x1\na,notanumber\n")
        assert main(["exhaustive", "--data", "junk.csv",
                     "--eps", "0.5"]) == EXIT_BAD_DATA

    def test_cap_abort_exit_code(self):
        rc = main(["exhaustive", "--synthetic", "--classes", "4", "--n", "60",
                   "--seed", "0", "--eps", "0.5", "--max-configs", "10"])
        assert rc == EXIT_CAP_EXCEEDED

    def test_lp_failure_exit_code(self, monkeypatch):
        def boom(rp, max_pivots=None):
            raise RuntimeError("forced failure")

        monkeypatch.setattr(cli.lp, "solve", boom)
        write_two_point_csv("two.csv")
        assert main(["exhaustive", "--data", "two.csv",
                     "--eps", "0.5"]) == EXIT_LP_FAILURE

    def test_invariant_violation_exit_code(self, monkeypatch):
        def fake_point(spec, ds, param):
            return CurveRow(param, 0.6 - param, 1.0, 2, "1:2", 0.0, True), {}

        monkeypatch.setattr(cli, "_execute_point", fake_point)
        write_two_point_csv("two.csv")
        assert main(["exhaustive", "--data", "two.csv",
                     "--eps", "0.1,0.2"]) == EXIT_INVARIANT

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0
