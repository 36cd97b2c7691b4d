"""Experiment schedules, rate computation, CSV output, CLI behavior."""

import math
import os

import numpy as np
import pytest

import fdlm.experiments_cli as xcli
from fdlm.experiments_cli import (CONVERGENCE_HEADER, QUADERR_HEADER,
                                  ExperimentPlan, build_level_spaces,
                                  cli_main, compute_rates, fitted_slope,
                                  make_plan, quadrature_error_study,
                                  write_convergence_csv, write_quaderr_csv,
                                  _fmt)

# the schedule helpers are named like tests, so keep them off the module
# namespace that pytest collects
schedule1 = xcli.test1_schedule
schedule2 = xcli.test2_schedule
from fdlm.mesh import DomainViolationError


class TestSchedules:
    def test_matched_ratio_schedule(self):
        assert schedule1(4) == [(16, 8), (32, 16), (64, 32), (128, 64)]

    def test_superlinear_solid_schedule(self):
        pairs = schedule2(7)
        assert [nf for nf, _ in pairs] == [8, 16, 32, 64, 128, 256, 512]
        assert [nb for _, nb in pairs] == [8, 23, 64, 181, 512, 1448, 4096]

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            make_plan(3, "l2", "exact", 2)
        with pytest.raises(ValueError):
            make_plan(1, "h2", "exact", 2)
        with pytest.raises(ValueError):
            make_plan(1, "l2", "fast", 2)
        with pytest.raises(ValueError):
            make_plan(1, "l2", "exact", 0)

    def test_plan_carries_schedule(self):
        plan = ExperimentPlan(2, "h1", "approx", 3)
        assert plan.schedule == schedule2(3)


class TestLevelSpaces:
    def test_meshes_and_orientations(self):
        V, Q, S, L = build_level_spaces(16, 8)
        assert Q.mesh.n_cells_per_side == 16
        assert V.mesh.n_cells_per_side == 32
        assert S.mesh is L.mesh
        assert S.mesh.n_cells_per_side == 8
        assert Q.mesh.domain == (-2.0, -2.0, 2.0, 2.0)
        assert S.mesh.domain == (0.0, 0.0, 1.0, 1.0)


class TestRates:
    def records(self, errors, hs=None):
        hs = hs or [2.0 ** -k for k in range(len(errors))]
        return [{"level": k, "h_solid": h, "h_omega": h, "err_u_h1": e}
                for k, (h, e) in enumerate(zip(hs, errors))]

    def test_per_level_ratios(self):
        recs = compute_rates(self.records([1.0, 0.5, 0.25]), 1)
        assert math.isnan(recs[0]["rate_u"])
        assert recs[1]["rate_u"] == pytest.approx(1.0)
        assert recs[2]["rate_u"] == pytest.approx(1.0)

    def test_stagnating_errors(self):
        recs = compute_rates(self.records([1.0, 1.0, 1.0]), 1)
        assert recs[1]["rate_u"] == 0.0 and recs[2]["rate_u"] == 0.0

    def test_nonpositive_error_gives_nan(self):
        recs = compute_rates(self.records([1.0, 0.0, 0.5]), 1)
        assert math.isnan(recs[1]["rate_u"])
        assert math.isnan(recs[2]["rate_u"])

    def test_global_slope(self):
        hs = [1.0, 0.5, 0.25, 0.125]
        recs = compute_rates(self.records([h ** 1.5 for h in hs], hs), 2)
        assert math.isnan(recs[0]["rate_u"])
        for rec in recs[1:]:
            assert rec["rate_u"] == pytest.approx(1.5, abs=1e-12)

    def test_fitted_slope(self):
        hs = [0.1, 0.05, 0.025]
        assert fitted_slope(hs, [h ** 2 for h in hs]) == pytest.approx(
            2.0, abs=1e-12)
        assert math.isnan(fitted_slope([0.1], [0.01]))
        assert math.isnan(fitted_slope(hs, [1.0, 0.0, 1.0]))


class TestCsvOutput:
    def test_headers(self):
        assert CONVERGENCE_HEADER == (
            "level,h_omega,h_solid,err_u_h1,err_p_l2,err_x_h1,err_lambda,"
            "cf_diff_1norm,rate_u,rate_p,rate_x,rate_lambda,rate_cf")
        assert QUADERR_HEADER == "level,h_solid,h_omega,cf_diff_1norm,rate"

    def test_float_format_round_trips(self):
        rng = np.random.default_rng(0)
        for x in rng.standard_normal(50) * 10.0 ** rng.integers(-12, 12, 50):
            assert float(_fmt(float(x))) == x
        assert _fmt(3) == "3"
        assert _fmt(math.nan) == "nan"

    def test_convergence_csv(self, tmp_path):
        recs = [{"level": 0, "h_omega": 0.25, "h_solid": 0.125,
                 "err_u_h1": 1.0, "err_p_l2": 2.0, "err_x_h1": 3.0,
                 "err_lambda": 4.0, "cf_diff_1norm": 5.0,
                 "rate_u": math.nan, "rate_p": math.nan, "rate_x": math.nan,
                 "rate_lambda": math.nan, "rate_cf": math.nan}]
        path = tmp_path / "conv.csv"
        write_convergence_csv(recs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == CONVERGENCE_HEADER
        assert lines[1] == ("0,0.25,0.125,1,2,3,4,5,nan,nan,nan,nan,nan")

    def test_quaderr_csv(self, tmp_path):
        recs = [{"level": 0, "h_solid": 0.125, "h_omega": 0.25,
                 "cf_diff_1norm": 1e-3, "rate_cf": math.nan},
                {"level": 1, "h_solid": 0.0625, "h_omega": 0.125,
                 "cf_diff_1norm": 2.5e-4, "rate_cf": 2.0}]
        path = tmp_path / "quad.csv"
        write_quaderr_csv(recs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == QUADERR_HEADER
        assert lines[1].startswith("0,0.125,0.25,")
        assert lines[1].endswith(",nan")
        assert lines[2].endswith(",2")


class TestQuadratureErrorStudy:
    def test_gap_shrinks_and_run_is_deterministic(self, tmp_path):
        plan = make_plan(1, "l2", "approx", 2)
        recs = quadrature_error_study(plan)
        assert recs[0]["cf_diff_1norm"] > recs[1]["cf_diff_1norm"] > 0
        assert recs[1]["rate_cf"] > 1.0
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_quaderr_csv(recs, a)
        write_quaderr_csv(quadrature_error_study(plan), b)
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_unknown_flag(self):
        assert cli_main(["run", "--test", "1", "--frobnicate"]) == 2

    def test_missing_out(self):
        assert cli_main(["quaderr", "--test", "1"]) == 2

    def test_bad_thread_count(self, tmp_path):
        out = str(tmp_path / "x.csv")
        assert cli_main(["quaderr", "--test", "1", "--out", out,
                         "--threads", "0"]) == 2

    def test_bad_thread_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FDLM_THREADS", "many")
        out = str(tmp_path / "x.csv")
        assert cli_main(["quaderr", "--test", "1", "--out", out]) == 2

    def test_thread_env_applies(self, tmp_path, monkeypatch):
        import fdlm.assembly as assembly
        monkeypatch.setenv("FDLM_THREADS", "2")
        out = str(tmp_path / "q.csv")
        assert cli_main(["quaderr", "--test", "1", "--levels", "2",
                         "--out", out]) == 0
        assert assembly._worker_cap == 2
        assembly.set_worker_cap(1)

    def test_single_level_rejected(self, tmp_path):
        out = str(tmp_path / "x.csv")
        assert cli_main(["run", "--test", "1", "--levels", "1",
                         "--out", out]) == 2
        assert cli_main(["quaderr", "--test", "2", "--levels", "1",
                         "--out", out]) == 2

    def test_bad_mesh_sizes(self, tmp_path):
        out = str(tmp_path / "x.csv")
        assert cli_main(["solve", "--n-fluid", "0", "--n-solid", "4",
                         "--out", out]) == 2

    def test_geometry_failure_reported(self, tmp_path, monkeypatch, capsys):
        def boom(plan):
            raise DomainViolationError("synthetic")
        monkeypatch.setattr(xcli, "run_convergence", boom)
        out = str(tmp_path / "x.csv")
        assert cli_main(["run", "--test", "1", "--levels", "2",
                         "--out", out]) == 1
        assert "fdlm: error:" in capsys.readouterr().err

    def test_quaderr_writes_csv(self, tmp_path):
        out = tmp_path / "q.csv"
        assert cli_main(["quaderr", "--test", "1", "--levels", "2",
                         "--coupling", "h1", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == QUADERR_HEADER
        assert len(lines) == 3

    def test_run_writes_csv(self, tmp_path):
        out = tmp_path / "conv.csv"
        assert cli_main(["run", "--test", "1", "--levels", "2",
                         "--assembly", "approx", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CONVERGENCE_HEADER
        assert len(lines) == 3
        row0 = lines[1].split(",")
        row1 = lines[2].split(",")
        assert row0[0] == "0" and row1[0] == "1"
        assert row0[-5:] == ["nan"] * 5
        assert all(v != "nan" for v in row1[3:8])

    def test_solve_dumps_and_reports(self, tmp_path, capsys):
        out = tmp_path / "sol.csv"
        assert cli_main(["solve", "--n-fluid", "8", "--n-solid", "4",
                         "--out", str(out)]) == 0
        text = capsys.readouterr().out
        for key in ("err_u_h1", "err_p_l2", "err_x_h1", "err_lambda",
                    "relative_residual"):
            assert ("%s = " % key) in text
        assert out.read_text().splitlines()[0] == "field,dof_index,value"
