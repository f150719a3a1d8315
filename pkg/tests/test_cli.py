import os

import numpy as np
import pytest

import moistflow as mf
from moistflow.cli import SCHEMA, build_simulation, main, parse_config


def write_config(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


BASE = """
grid.nx = 8
grid.ny = 8
grid.nz = 9
constants.set = nondimensional
solver.dt = 1e-3
solver.t_end = 3e-3
solver.mode = direct
ic.preset = thermal_bubble
"""


class TestParseConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        rc = parse_config(write_config(tmp_path / "c.cfg", ""))
        assert rc["grid.nx"] == 16
        assert rc["solver.mode"] == "direct"
        # echo lists every schema key
        echo = rc.echo_text()
        for key in SCHEMA:
            assert f"\n{key} = " in "\n" + echo

    def test_unknown_key_reports_line(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", "grid.nx = 8\nbogus.key = 1\n")
        with pytest.raises(mf.ConfigError, match=r"c\.cfg:2.*bogus\.key"):
            parse_config(path)

    def test_type_mismatch_rejected(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", "grid.nx = five\n")
        with pytest.raises(mf.ConfigError, match="grid.nx"):
            parse_config(path)

    def test_sign_condition_enforced(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", "boundary.T.alpha_bottom = 0.5\n")
        with pytest.raises(mf.ConfigError, match="sign condition"):
            parse_config(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", "grid.nx = 8\ngrid.nx = 16\n")
        with pytest.raises(mf.ConfigError, match="duplicate"):
            parse_config(path)

    def test_comments_and_blank_lines(self, tmp_path):
        path = write_config(tmp_path / "c.cfg",
                            "# full line comment\n\ngrid.nx = 8  # trailing\n")
        assert parse_config(path)["grid.nx"] == 8

    def test_grid_invariants_checked(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", "grid.nx = 7\n")
        with pytest.raises(mf.ConfigError, match="even"):
            parse_config(path)

    def test_echo_reparse_round_trip(self, tmp_path):
        cfg = BASE + "boundary.T.alpha_bottom = -1.0\nboundary.T.alpha_top = 1.0\n" \
            + "boundary.T.value_bottom = modes: 0,0,1.0,0; 1,0,0.25,0.1\n"
        rc = parse_config(write_config(tmp_path / "a.cfg", cfg))
        echo1 = rc.echo_text()
        rc2 = parse_config(write_config(tmp_path / "b.cfg", echo1))
        assert rc2 == rc
        assert rc2.echo_text() == echo1

    def test_mode_table_parsing(self, tmp_path):
        cfg = "boundary.v.value_bottom = modes: 2,1,0.5,0.25\n"
        rc = parse_config(write_config(tmp_path / "c.cfg", cfg))
        table = rc["boundary.v.value_bottom"]
        assert table[(2, 1)] == pytest.approx((0.5 - 0.25j) / 2)
        assert table[(-2, -1)] == pytest.approx((0.5 + 0.25j) / 2)


class TestPresets:
    def test_equilibrium_is_picard_fixed_point(self, grid16, nondim):
        state, bspec = mf.preset_initial("equilibrium", grid16, nondim)
        sim = mf.Simulation(grid16, nondim, bspec,
                            mf.SolverConfig(dt=1e-3, t_end=1e-3, mode="picard"))
        _, rep = sim.picard_solve(state, 1e-3)
        assert rep.iterations == 1 and rep.converged

    def test_zero_amplitude_bubble_equals_equilibrium(self, grid16, nondim):
        eq, _ = mf.preset_initial("equilibrium", grid16, nondim)
        bb, _ = mf.preset_initial("thermal_bubble", grid16, nondim,
                                  params={"amplitude": 0.0})
        assert np.array_equal(eq.frak_T.values, bb.frak_T.values)
        assert np.array_equal(eq.log_rho_d.values, bb.log_rho_d.values)

    def test_saturated_layer_activates_condensation(self, grid16, nondim):
        """Direct source evaluation on the initial condition."""
        state, bspec = mf.preset_initial("saturated_layer", grid16, nondim)
        factors = mf.build_factors(bspec, grid16)
        closure = mf.SaturationClosure(nondim)
        T = mf.dehomogenize(state.frak_T, factors["T"])
        qv = mf.dehomogenize(state.frak_q_v, factors["v"])
        qc = mf.dehomogenize(state.frak_q_c, factors["c"])
        qr = mf.dehomogenize(state.frak_q_r, factors["r"])
        rho = mf.rho_d(state)
        p = mf.pressure(rho, qv, T, nondim)
        qvs = mf.saturation_q_vs(p, T, closure)
        bundle = mf.sources(T, qv, qc, qr, qvs, nondim, clipped=True)
        assert np.max(bundle.S_cd.values) > 0.0
        assert np.max(bundle.S_ev.values) > 0.0
        assert np.max(bundle.S_ac.values) > 0.0
        assert np.max(bundle.S_cr.values) > 0.0

    def test_unknown_preset_rejected(self, grid8, nondim):
        with pytest.raises(ValueError, match="unknown preset"):
            mf.preset_initial("vortex", grid8, nondim)

    def test_presets_satisfy_discrete_robin_condition(self, grid16, nondim, bases16):
        """Wall-normal derivative of the homogenized fields vanishes in the
        cosine representation and wall traces match the boundary data."""
        state, bspec = mf.preset_initial("saturated_layer", grid16, nondim)
        factors = mf.build_factors(bspec, grid16)
        T = mf.dehomogenize(state.frak_T, factors["T"])
        assert T.values[:, :, 0] == pytest.approx(
            np.full((16, 16), float(np.real(
                mf.build_extension(bspec["T"].data_bottom, 0.0, grid16)
                .beta_bottom[0, 0]))), abs=1e-10)


class TestMain:
    def test_check_valid_config(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.cfg", BASE)
        assert main(["check", path]) == 0
        assert "config ok" in capsys.readouterr().out
        assert not (tmp_path / "out").exists()

    def test_check_invalid_config_exit_2(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.cfg", "boundary.c.alpha_top = -2\n")
        assert main(["check", path]) == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_subcommand_exit_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_run_writes_outputs(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", BASE)
        out = str(tmp_path / "out")
        assert main(["run", path, "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "diagnostics.csv"))
        assert os.path.exists(os.path.join(out, "config.echo"))
        assert os.path.exists(os.path.join(out, "final_state", "meta.txt"))

    def test_env_out_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path / "c.cfg", BASE)
        envdir = str(tmp_path / "envout")
        monkeypatch.setenv("MOISTFLOW_OUT", envdir)
        assert main(["run", path]) == 0
        assert os.path.exists(os.path.join(envdir, "diagnostics.csv"))

    def test_determinism_bitwise_csv(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", BASE)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        assert main(["run", path, "--out", out1]) == 0
        assert main(["run", path, "--out", out2]) == 0
        a = open(os.path.join(out1, "diagnostics.csv"), "rb").read()
        b = open(os.path.join(out2, "diagnostics.csv"), "rb").read()
        assert a == b

    def test_run_then_resume_matches_uninterrupted(self, tmp_path):
        full_cfg = BASE + "solver.t_end = 6e-3\nsolver.checkpoint_every = 3\n"
        full_cfg = full_cfg.replace("solver.t_end = 3e-3\n", "")
        path = write_config(tmp_path / "full.cfg", full_cfg)
        out_full = str(tmp_path / "full")
        assert main(["run", path, "--out", out_full]) == 0

        # resume a second copy of the run from its half-way checkpoint
        out_half = str(tmp_path / "half")
        assert main(["run", path, "--out", out_half]) == 0
        ckpt = os.path.join(out_half, "checkpoints", "step_000003")
        out_res = str(tmp_path / "resumed")
        assert main(["resume", ckpt, "--out", out_res]) == 0

        ref = mf.load_state(os.path.join(out_full, "final_state"))
        got = mf.load_state(os.path.join(out_res, "final_state"))
        assert got.time == ref.time
        for fa, fb in ((ref.log_rho_d, got.log_rho_d), (ref.u.w, got.u.w),
                       (ref.frak_T, got.frak_T), (ref.frak_q_r, got.frak_q_r)):
            assert np.array_equal(fa.values, fb.values)

    def test_export_plot(self, tmp_path):
        path = write_config(tmp_path / "c.cfg", BASE)
        out = str(tmp_path / "out")
        assert main(["run", path, "--out", out]) == 0
        assert main(["export-plot", out]) == 0
        long_path = os.path.join(out, "diagnostics_long.csv")
        with open(long_path) as fh:
            header = fh.readline().strip().split(",")
        assert header == ["time", "step", "variable", "value"]

    def test_export_plot_missing_dir_exit_1(self, tmp_path):
        assert main(["export-plot", str(tmp_path / "nope")]) == 1


class TestBuildSimulation:
    def test_boundary_override_applies(self, tmp_path):
        cfg = BASE + ("boundary.T.alpha_bottom = -1.0\n"
                      "boundary.T.alpha_top = 1.0\n"
                      "boundary.T.value_bottom = 1.0\n"
                      "boundary.T.value_top = 1.0\n")
        rc = parse_config(write_config(tmp_path / "c.cfg", cfg))
        sim, state = build_simulation(rc)
        assert sim.bspec["T"].alpha_bottom == -1.0
        assert sim.bspec["T"].data_bottom == 1.0

    def test_nondimensional_constants_with_override(self, tmp_path):
        cfg = "constants.set = nondimensional\nconstants.g = 0.5\n"
        rc = parse_config(write_config(tmp_path / "c.cfg", cfg))
        c = rc.constants()
        assert c.R_d == 1.0 and c.g == 0.5
