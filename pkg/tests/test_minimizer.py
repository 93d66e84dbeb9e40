import numpy as np
import pytest
from scipy import optimize

from anyon_afp.energy import PhysicsParams, energy_afp
from anyon_afp.fieldio import dump_field
from anyon_afp.grid import inner, make_grid
from anyon_afp.minimizer import (
    SolverConfig, align, blowup_length, centroid, initial_state, minimize, translate,
)
from anyon_afp.townes import sample_on_grid


@pytest.fixture(scope="module")
def harmonic_result():
    return minimize(PhysicsParams(), SolverConfig(init_scale=1.5), make_grid(64, 16.0))


class TestSolverConfig:
    @pytest.mark.parametrize("kw", [
        {"grad_tol": 0.0}, {"backtrack_factor": 0.95}, {"init_kind": "spiral"}, {"init_kind": "file"},
        {"max_iters": 0}, {"step0": -1.0},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestMinimize:
    def test_harmonic_oscillator(self, harmonic_result):
        r = harmonic_result
        assert r.converged, r.status
        assert r.energy.total == pytest.approx(2.0, abs=1e-4)
        assert r.mu == pytest.approx(2.0, abs=1e-4)

    def test_monotone_descent(self, harmonic_result):
        h = np.array(harmonic_result.history)
        floor = 64 * np.finfo(float).eps * 4
        assert np.all(np.diff(h) <= floor)

    def test_unit_norm(self, harmonic_result):
        g = harmonic_result.grid
        assert inner(harmonic_result.u_final, harmonic_result.u_final, g).real == pytest.approx(1.0, abs=1e-12)

    def test_attractive_below_townes_trial_bound(self, townes_data):
        # the scaled-Townes trial energy is an upper bound whose relative gap
        # closes as g -> g*(0): about 2.2%, 1.3%, 0.7% at delta = 0.1, 0.05, 0.025
        c = townes_data.consts
        gaps = []
        for delta in (0.1, 0.05, 0.025):
            g_val = (1 - delta) * c.g_star0
            ell = (delta / c.q_s) ** 0.25
            grid = make_grid(128, 16 * ell)
            cfg = SolverConfig(init_kind="townes", init_scale=ell, grad_tol=1e-6)
            res = minimize(PhysicsParams(g=g_val), cfg, grid)
            assert res.converged, res.status
            trial = optimize.minimize_scalar(lambda l: delta / l**2 + l**2 * c.q_s,
                                             bounds=(0.05, 5), method="bounded").fun
            assert res.energy.total <= trial * (1 + 1e-6)
            gaps.append(1 - res.energy.total / trial)
        assert gaps[0] <= 2.5e-2
        assert gaps[1] <= 2e-2
        assert gaps[0] > gaps[1] > gaps[2] > 0

    def test_magnetic_stable_regime(self, townes_data):
        grid = make_grid(64, 12.0)
        p = PhysicsParams(beta=0.1, g=0.5 * townes_data.consts.g_star0)
        res = minimize(p, SolverConfig(grad_tol=1e-7), grid)
        assert res.converged and res.residual <= 1e-6

    def test_unstable_regime_diverges(self, townes_data):
        p = PhysicsParams(beta=0.01, g=1.2 * townes_data.consts.g_star0)
        res = minimize(p, SolverConfig(max_iters=2000), make_grid(64, 8.0))
        assert res.diverged and not res.converged
        assert "diverged" in res.status

    def test_hartree_requires_params(self):
        with pytest.raises(ValueError):
            minimize(PhysicsParams(), SolverConfig(max_iters=1), make_grid(32, 8.0), hartree=True)

    def test_file_init_and_checkpoints(self, tmp_path, harmonic_result):
        g = harmonic_result.grid
        dump_field(harmonic_result.u_final, g, tmp_path / "u.bin")
        cfg = SolverConfig(init_kind="file", init_path=str(tmp_path / "u.bin"), max_iters=4,
                           checkpoint_every=1, checkpoint_dir=str(tmp_path / "ck"))
        u0 = initial_state(g, cfg)
        assert np.allclose(u0, harmonic_result.u_final)
        minimize(PhysicsParams(), cfg, g)

    def test_file_init_grid_mismatch(self, tmp_path, harmonic_result):
        dump_field(harmonic_result.u_final, harmonic_result.grid, tmp_path / "u.bin")
        cfg = SolverConfig(init_kind="file", init_path=str(tmp_path / "u.bin"))
        with pytest.raises(ValueError, match="different grid"):
            initial_state(make_grid(32, 16.0), cfg)


class TestAlign:
    def test_pure_phase(self, q0_128, grid128):
        al = align(np.exp(0.7j) * q0_128, q0_128, grid128)
        assert np.angle(np.exp(1j * (al.theta + 0.7))) == pytest.approx(0.0, abs=1e-10)
        assert al.distance <= 1e-8

    def test_cell_shift(self, q0_128, grid128):
        al = align(np.roll(q0_128, (3, -2), axis=(0, 1)), q0_128, grid128)
        assert al.shift_cells == (3, -2)
        assert al.shift == pytest.approx((3 * grid128.h, -2 * grid128.h))
        assert al.distance <= 1e-6

    def test_phase_orthogonality(self, q0_128, grid128, rng):
        x1, x2 = grid128.coords
        r = 0.01 * x1 * np.exp(-grid128.radius**2)
        r -= inner(q0_128, r, grid128).real * q0_128.real
        u = q0_128 + 1j * r
        al = align(u, q0_128, grid128)
        ortho = grid128.h**2 * np.sum(q0_128.real * al.u_aligned.imag)
        assert abs(ortho) <= 1e-8

    def test_shape_mismatch(self, q0_128, grid128):
        with pytest.raises(ValueError):
            align(q0_128[:64, :64], q0_128, grid128)


class TestBlowupLength:
    @pytest.mark.parametrize("ell", [0.8, 1.0, 1.5])
    def test_townes_scale(self, townes_data, ell):
        g = make_grid(128, 16.0 * max(ell, 1.0))
        u = sample_on_grid(townes_data.profile, g, ell)
        assert blowup_length(u, g) == pytest.approx(ell, rel=5e-3)
        assert blowup_length(u, g, mode="variational") == pytest.approx(ell, rel=5e-3)

    def test_gaussian_finite(self, harmonic_result):
        ell = blowup_length(harmonic_result)
        assert np.isfinite(ell) and ell > 0.5

    def test_unconverged_rejected(self):
        res = minimize(PhysicsParams(), SolverConfig(max_iters=1), make_grid(32, 8.0))
        with pytest.raises(ValueError, match="converged"):
            blowup_length(res)

    def test_unknown_mode(self, q0_128, grid128):
        with pytest.raises(ValueError):
            blowup_length(q0_128, grid128, mode="fwhm")


class TestHelpers:
    def test_translate_moves_centroid(self, grid128):
        u = np.exp(-grid128.radius**2 / 2).astype(complex)
        v = translate(u, grid128, (0.3, -0.2))
        assert centroid(v, grid128) == pytest.approx([0.3, -0.2], abs=1e-8)

    def test_initial_state_normalized(self, grid64):
        for kind in ("gaussian", "townes"):
            u = initial_state(grid64, SolverConfig(init_kind=kind, init_scale=1.2))
            assert inner(u, u, grid64).real == pytest.approx(1.0, abs=1e-12)
            assert energy_afp(u, grid64, PhysicsParams()).total > 0
