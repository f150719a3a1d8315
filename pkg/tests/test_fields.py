import math

import numpy as np
import pytest

import moistflow as mf
from moistflow.fields import ScalarField, VectorField, State
from moistflow.spectral_ops import to_modal_values, to_phys_values

from conftest import random_band_limited


class TestMakeGrid:
    def test_spacing_and_endpoints(self):
        g = mf.make_grid(8, 8, 9)
        assert g.dx == pytest.approx(0.25)
        assert g.dy == pytest.approx(0.25)
        assert g.z[0] == 0.0 and g.z[-1] == 1.0
        assert g.z.shape == (9,)

    def test_smallest_legal_grid(self):
        g = mf.make_grid(4, 4, 4)
        assert g.shape == (4, 4, 4)

    def test_odd_nx_rejected(self):
        with pytest.raises(ValueError, match="even"):
            mf.make_grid(7, 8, 9)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            mf.make_grid(2, 8, 9)
        with pytest.raises(ValueError, match="nz"):
            mf.make_grid(8, 8, 3)

    def test_volume_and_weights(self, grid8):
        assert grid8.volume == pytest.approx(4.0)
        w = grid8.quad_weights()
        assert np.sum(np.broadcast_to(w, grid8.shape)) == pytest.approx(4.0)


class TestSignParts:
    def test_constant_negative(self, grid8):
        f = ScalarField.full(grid8, -3.0)
        assert np.all(mf.positive_part(f).values == 0.0)
        assert np.all(mf.negative_part(f).values == 3.0)

    def test_zero(self, grid8):
        f = ScalarField.zeros(grid8)
        assert np.all(mf.positive_part(f).values == 0.0)
        assert np.all(mf.negative_part(f).values == 0.0)

    def test_complementarity_sine(self, grid8):
        vals = np.sin(np.pi * grid8.x)[:, None, None] * np.ones(grid8.shape)
        f = ScalarField(grid8, vals)
        prod = mf.positive_part(f).values * mf.negative_part(f).values
        assert np.all(prod == 0.0)

    def test_decomposition_exact(self, grid8, bases8):
        vals = random_band_limited(grid8, bases8, seed=3)
        f = ScalarField(grid8, vals)
        recomposed = mf.positive_part(f).values - mf.negative_part(f).values
        assert np.array_equal(recomposed, vals)

    def test_spectral_input_rejected(self, grid8, bases8):
        f = ScalarField(grid8, to_modal_values(np.zeros(grid8.shape), bases8.neumann),
                        space="spectral", basis="neumann_z")
        with pytest.raises(ValueError, match="physical"):
            mf.positive_part(f)


def _state_with_log_rho(grid, vals):
    return State(ScalarField(grid, vals), VectorField.zeros(grid),
                 ScalarField.zeros(grid), ScalarField.zeros(grid),
                 ScalarField.zeros(grid), ScalarField.zeros(grid))


class TestRhoD:
    def test_zero_log_gives_unit_density(self, grid8):
        s = _state_with_log_rho(grid8, np.zeros(grid8.shape))
        assert np.all(mf.rho_d(s).values == 1.0)

    def test_log_two(self, grid8):
        s = _state_with_log_rho(grid8, np.full(grid8.shape, math.log(2.0)))
        assert mf.rho_d(s).values == pytest.approx(2.0)

    def test_random_against_scalar_exponential(self, grid8, bases8):
        vals = 0.3 * random_band_limited(grid8, bases8, seed=7)
        s = _state_with_log_rho(grid8, vals)
        got = mf.rho_d(s).values
        # independent elementwise oracle via math.exp
        flat = vals.ravel()
        expected = np.array([math.exp(v) for v in flat]).reshape(vals.shape)
        assert np.allclose(got, expected, rtol=1e-15, atol=0.0)
        assert np.all(got > 0.0)

    def test_non_finite_rejected(self, grid8):
        vals = np.zeros(grid8.shape)
        s = _state_with_log_rho(grid8, vals)
        s.log_rho_d.values[0, 0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            mf.rho_d(s)


class TestRoundTrip:
    @pytest.mark.parametrize("kind", ["neumann_z", "dirichlet_z"])
    def test_band_limited_round_trip(self, grid16, bases16, kind):
        vals = random_band_limited(grid16, bases16, kind=kind, seed=11)
        basis = bases16.neumann if kind == "neumann_z" else bases16.dirichlet
        back = to_phys_values(to_modal_values(vals, basis), basis)
        scale = np.max(np.abs(vals))
        assert np.max(np.abs(back - vals)) <= 1e-12 * scale


class TestSnapshotIO:
    def test_field_round_trip(self, tmp_path, grid8, bases8):
        vals = random_band_limited(grid8, bases8, seed=5)
        f = ScalarField(grid8, vals)
        path = tmp_path / "field.dat"
        mf.save_field(path, f, "frak_T", 0.125)
        loaded, name, time = mf.load_field(path)
        assert name == "frak_T" and time == 0.125
        assert np.array_equal(loaded.values, vals)

    def test_header_format(self, tmp_path, grid8):
        path = tmp_path / "f.dat"
        mf.save_field(path, ScalarField.zeros(grid8), "u_x", 1.5)
        with open(path, "rb") as fh:
            header = fh.readline().decode("utf-8")
        assert header == "MOISTFLOW1 8 8 9 1.5 u_x\n"

    def test_payload_is_little_endian_z_fastest(self, tmp_path, grid8):
        vals = np.arange(np.prod(grid8.shape), dtype=float).reshape(grid8.shape)
        path = tmp_path / "f.dat"
        mf.save_field(path, ScalarField(grid8, vals), "x", 0.0)
        with open(path, "rb") as fh:
            fh.readline()
            raw = np.frombuffer(fh.read(), dtype="<f8")
        # z-fastest: the first nz entries are the first column of values
        assert np.array_equal(raw[:grid8.nz], vals[0, 0, :])

    def test_state_round_trip(self, tmp_path, grid8, bases8, nondim):
        state, _ = mf.preset_initial("manufactured", grid8, nondim)
        mf.save_state(tmp_path / "ckpt", state)
        loaded = mf.load_state(tmp_path / "ckpt")
        assert loaded.time == state.time
        assert np.array_equal(loaded.log_rho_d.values, state.log_rho_d.values)
        assert np.array_equal(loaded.u.w.values, state.u.w.values)
        assert np.array_equal(loaded.frak_q_r.values, state.frak_q_r.values)
