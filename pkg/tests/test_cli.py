import csv
import json
import os

import pytest

from augtik import cli
from augtik.auglag import CSV_COLUMNS, SolverParams
from augtik.cli import ConfigError, RunConfig, main, parse_config, run_and_emit


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config([], environ={})
        assert cfg.problem == "example1" and cfg.cells is None
        assert cfg.params == SolverParams()
        p = cfg.params
        assert (p.theta, p.omega, p.tau, p.eps, p.eps_i, p.alpha1, p.rho1) == (5.0, 0.75, 0.8, 1e-6, 5e-7, 1.0, 100.0)

    def test_rejects_tau_out_of_range(self):
        with pytest.raises(ConfigError, match=r"τ must lie in \(0,1\)"):
            parse_config(["--tau", "1.5"], environ={})

    def test_unknown_problem(self):
        with pytest.raises(ConfigError, match="problem: unknown problem"):
            parse_config(["--problem", "example4"], environ={})

    @pytest.mark.parametrize("flag, value, key", [("--cells", "3", "cells"), ("--beta", "-1", "beta"), ("--eps-i", "1e-5", "eps_i")])
    def test_error_names_key(self, flag, value, key):
        with pytest.raises(ConfigError, match=f"^{key}:"):
            parse_config([flag, value], environ={})

    def test_batch_beta(self):
        cfg = parse_config(["--problem", "example2_rect", "--batch-beta", "0.05,0.1,0.2,1"], environ={})
        assert cfg.batch_beta == [0.05, 0.1, 0.2, 1.0]
        assert len(cli._jobs(cfg)) == 4

    def test_config_file_and_flag_precedence(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("problem: example3\ntheta: 10\nalpha1: 0.1\ncells: 16\neps-i: 1e-7\n")
        cfg = parse_config(["--config", str(path), "--cells", "32"], environ={})
        assert cfg.problem == "example3" and cfg.cells == 32
        assert (cfg.params.theta, cfg.params.alpha1, cfg.params.eps_i) == (10.0, 0.1, 1e-7)

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("problem: example1\nlearning_rate: 3\n")
        with pytest.raises(ConfigError, match="learning_rate: unknown configuration key"):
            parse_config(["--config", str(path)], environ={})

    def test_nested_config_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("theta:\n  a: 1\n")
        with pytest.raises(ConfigError, match="nested"):
            parse_config(["--config", str(path)], environ={})

    def test_environment_overrides_output(self):
        cfg = parse_config(["--out", "flag_dir"], environ={cli.OUT_ENV: "env_dir"})
        assert cfg.out == "env_dir"


class TestRunAndEmit:
    def test_example1_outputs(self, tmp_path):
        out = tmp_path / "ex1"
        assert main(["--problem", "example1", "--cells", "4096", "--out", str(out)]) == 0
        rows = read_csv(out / "log.csv")
        assert tuple(rows[0]) == CSV_COLUMNS
        assert 20 <= len(rows) - 1 <= 80
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["counts"]) == {"successful", "intermediate", "not_successful"}
        assert sum(summary["counts"].values()) == len(rows) - 1
        errors = read_csv(out / "errors.csv")
        assert {r[2] for r in errors[1:]} <= {"successful", "intermediate"}

    def test_sanity_keeps_rho(self, tmp_path):
        out = tmp_path / "missing" / "nested"
        assert main(["--problem", "tikhonov_sanity", "--cells", "64", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final"]["rho"] == summary["params"]["rho1"]
        assert summary["final"]["err_u_L2"] is None
        assert not (out / "errors.csv").exists()

    def test_batch_runs_are_isolated(self, tmp_path):
        cfg = RunConfig(problem="example2_rect", cells=8, batch_beta=[0.05, 0.1, 0.2, 1.0], out=str(tmp_path), workers=2)
        run_and_emit(cfg, stream=open(os.devnull, "w"))
        dirs = sorted(p.name for p in tmp_path.iterdir())
        assert dirs == ["beta_0.05", "beta_0.1", "beta_0.2", "beta_1.0"]
        for d in dirs:
            assert (tmp_path / d / "log.csv").exists() and (tmp_path / d / "summary.json").exists()

    def test_outputs_are_bit_identical(self, tmp_path):
        for name in ("a", "b"):
            main(["--problem", "example1", "--cells", "256", "--plot-data", "--out", str(tmp_path / name)])
        for f in ("log.csv", "summary.json", "errors.csv", "solution.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_unwritable_path(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["--problem", "example1", "--cells", "16", "--out", str(blocker / "sub")]) == cli.EXIT_IO
        assert "cannot write outputs" in capsys.readouterr().err

    def test_usage_error_exit(self, capsys):
        assert main(["--tau", "1.5"]) == cli.EXIT_USAGE
        assert "τ must lie in (0,1)" in capsys.readouterr().err

    def test_not_converged_exit(self, tmp_path):
        assert main(["--cells", "64", "--max-outer", "2", "--out", str(tmp_path)]) == cli.EXIT_NOT_CONVERGED
