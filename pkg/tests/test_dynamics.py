import math

import numpy as np
import pytest

from dbs_traj import dynamics, wavefield
from dbs_traj.core import LaunchProfile, Mode, Ray, Scenario, Shape, launch_bundle
from dbs_traj.errors import CausticError, ImaginaryRoot, SingularGuidance, StepTooLarge
from dbs_traj.potentials import Free, HarmonicChannel


def _short(**changes):
    """A small, fast Gaussian scenario (p0 ~ 628, z_R ~ 314)."""
    base = Scenario(epsilon=1e-2, n_rays=51, z_max=0.5 * math.pi / 1e-2)
    return base.replace(**changes)


class TestDerivatives:
    def test_free_planar_gaussian(self):
        s = _short()
        b = launch_bundle(s)
        drdt, dpdt = dynamics.derivatives(b, s.potential)
        assert np.array_equal(drdt[:, 1], b.pz) and np.all(drdt[:, 0] == 0)
        # the wave force pushes rays away from the axis
        assert np.all(dpdt[26:, 0] > 0) and np.all(dpdt[:25, 0] < 0) and dpdt[25, 0] == 0

    def test_relativistic_velocity_below_c(self):
        s = _short(mode=Mode.RELATIVISTIC, rest_mass_energy=0.75)
        b = launch_bundle(s)
        drdt, _ = dynamics.derivatives(b, Free())
        assert np.allclose(np.hypot(*drdt.T), 0.8, rtol=1e-12)

    def test_massless_rays_move_at_c(self):
        s = _short(mode=Mode.RELATIVISTIC)
        b = launch_bundle(s)
        drdt, _ = dynamics.derivatives(b, Free())
        assert np.allclose(np.hypot(*drdt.T), 1.0, rtol=1e-15)

    def test_singular_guidance(self):
        s = _short(mode=Mode.RELATIVISTIC, n_rays=9, launch=LaunchProfile(span=4.0))
        b = launch_bundle(s)
        # V = k x^2 / 2 reaches E on the rays launched at x = -1 and x = 1
        with pytest.raises(SingularGuidance, match="ray 3"):
            dynamics.derivatives_rel(b, HarmonicChannel(2.0 * s.energy), energy=s.energy)


class TestHamiltonian:
    def test_non_relativistic_centre(self):
        ray = Ray(0.0, 0.0, 0.0, 10.0, 1.0, 1.0, 0.0)
        assert dynamics.hamiltonian(ray, 1.0, 0.0, Mode.NON_RELATIVISTIC, 50.0) == 51.0

    def test_relativistic(self):
        ray = Ray(0.0, 0.0, 3.0, 0.0, 1.0, 1.0, 0.0)
        h = dynamics.hamiltonian(ray, 0.0, 2.0, Mode.RELATIVISTIC, 5.0, rest_mass_energy=4.0)
        assert h == pytest.approx(7.0)

    def test_imaginary_root(self):
        ray = Ray(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)
        with pytest.raises(ImaginaryRoot):
            dynamics.hamiltonian(ray, -1.0, 0.0, Mode.RELATIVISTIC, 1.0)

    def test_classical_ignores_w(self):
        ray = Ray(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.0)
        assert dynamics.hamiltonian(ray, 9.0, 1.0, Mode.CLASSICAL, 2.0) == 3.0


class TestStep:
    def test_classical_free_step_is_exact(self):
        s = _short(mode=Mode.CLASSICAL)
        b = launch_bundle(s)
        b.px[:] = np.linspace(-3, 3, len(b))
        nb, rep = dynamics.step(b, Free(), 0.01)
        assert np.allclose(nb.x, b.x + 0.01 * b.px, rtol=0, atol=1e-15)
        assert np.allclose(nb.z, 0.01 * b.pz, rtol=1e-15)
        assert rep.max_dH == 0.0

    def test_input_is_not_modified(self):
        s = _short()
        b = launch_bundle(s)
        x = b.x.copy()
        dynamics.step(b, s.potential, 1e-3)
        assert np.array_equal(b.x, x)

    def test_one_step_time_reversal_in_free_space(self):
        s = _short(potential=Free())
        b = launch_bundle(s)
        # RK4 reverses only to O(dt**5); a tenth of the adaptive step brings that under 1e-10
        dt = 0.1 * dynamics.suggest_dt(b, s.potential, 1.0, 0.9)
        fwd, _ = dynamics.step(b, s.potential, dt)
        back = fwd.with_state(0.0, -fwd.x, fwd.z, fwd.px, -fwd.pz)
        wavefield.refresh(back)
        back, _ = dynamics.step(back, s.potential, dt)
        assert np.max(np.abs(-back.x - b.x)) < 1e-10
        assert np.max(np.abs(back.z - b.z)) < 1e-10

    def test_time_reversal(self):
        s = _short(potential=HarmonicChannel(50.0))
        b = launch_bundle(s)
        dt = 2e-4
        fwd = b
        for _ in range(20):
            fwd, _ = dynamics.step(fwd, s.potential, dt)
        # reverse time and mirror x together so the front keeps its orientation;
        # the launch and the channel are both even in x
        back = fwd.with_state(0.0, -fwd.x, fwd.z, fwd.px, -fwd.pz)
        wavefield.refresh(back)
        for _ in range(20):
            back, _ = dynamics.step(back, s.potential, dt)
        assert np.max(np.abs(-back.x - b.x)) < 1e-10
        assert np.max(np.abs(back.z - b.z)) < 1e-10 * s.p0 * 20 * dt

    def test_huge_step_is_rejected(self):
        s = _short()
        b = launch_bundle(s)
        with pytest.raises(StepTooLarge):
            dynamics.step(b, s.potential, 10.0)

    def test_suggested_step_is_accepted(self):
        s = _short()
        b = launch_bundle(s)
        dt = dynamics.suggest_dt(b, s.potential, 1.0, 0.9)
        assert 0 < dt < 1.0
        dynamics.step(b, s.potential, dt)

    def test_dispersive_bound_scales_with_spacing(self):
        a = launch_bundle(_short(n_rays=51))
        b = launch_bundle(_short(n_rays=101))
        ratio = dynamics.dispersive_dt(a, Free()) / dynamics.dispersive_dt(b, Free())
        assert ratio == pytest.approx(4.0, rel=1e-9)
        assert dynamics.dispersive_dt(launch_bundle(_short(mode=Mode.CLASSICAL)), Free()) == math.inf


class TestRun:
    def test_classical_free_rays_are_straight(self):
        s = _short(mode=Mode.CLASSICAL, potential=Free())
        rec = dynamics.run(s)
        assert rec.error is None
        x = rec.column("x")
        assert np.array_equal(x, np.broadcast_to(x[0], x.shape))
        assert rec.column("z")[-1, 25] >= s.z_max

    def test_wave_mode_spreads_the_beam(self):
        s = _short()
        rec = dynamics.run(s)
        assert rec.error is None
        x = rec.column("x")
        assert abs(x[-1, 38]) > abs(x[0, 38])

    def test_runs_are_bit_identical(self):
        s = _short(launch=LaunchProfile(Shape.BELL, span=2.25), n_rays=41)
        a, b = dynamics.run(s), dynamics.run(s)
        assert a.times == b.times
        assert all(np.array_equal(p, q) for p, q in zip(a.states, b.states))

    def test_mirror_symmetry_is_exact(self):
        rec = dynamics.run(_short())
        x = rec.column("x")
        px = rec.column("px")
        assert np.array_equal(x, -x[:, ::-1])
        assert np.array_equal(px, -px[:, ::-1])

    def test_energy_drift_is_monotone_and_small(self):
        seen = []
        rec = dynamics.run(_short(), on_step=lambda b, r: seen.append(r.max_dH))
        assert seen == sorted(seen)
        assert rec.report.max_dH == seen[-1]
        # the edge rays carry |W| / E ~ 1.6e-4 at this coarse epsilon
        assert seen[-1] < 1e-4

    def test_sampling_stride(self):
        rec = dynamics.run(_short(output=_short().output.__class__(stride=7)))
        assert len(rec.times) == math.ceil(rec.n_steps / 7) + 1
        assert rec.times[-1] == max(rec.times)

    def test_partial_record_on_caustic(self, monkeypatch):
        real = dynamics.step
        calls = {"n": 0}

        def flaky(b, V, dt, monitor=None):
            calls["n"] += 1
            if calls["n"] > 3:
                raise CausticError("forced", [7])
            return real(b, V, dt, monitor)

        monkeypatch.setattr(dynamics, "step", flaky)
        rec = dynamics.run(_short())
        assert isinstance(rec.error, CausticError)
        assert rec.n_steps == 3 and len(rec.times) == 4

    def test_singular_guidance_ends_run(self):
        s = _short(mode=Mode.RELATIVISTIC, n_rays=17, launch=LaunchProfile(span=4.0))
        s = s.replace(potential=HarmonicChannel(2.0 * s.energy / 16.0))
        rec = dynamics.run(s)
        assert isinstance(rec.error, SingularGuidance)
        assert rec.n_steps == 0 and len(rec.times) == 1

    def test_step_budget(self):
        rec = dynamics.run(_short(), max_steps=2)
        assert isinstance(rec.error, RuntimeError) and rec.n_steps == 2

    def test_leaving_the_potential_grid_ends_run(self):
        from dbs_traj.errors import OutOfGrid
        from dbs_traj.potentials import TabulatedGrid
        xs, zs = (-5.0, 0.0, 5.0), (0.0, 10.0)
        grid = TabulatedGrid(xs, zs, tuple((0.0, 0.0) for _ in xs))
        rec = dynamics.run(_short(potential=grid))
        assert isinstance(rec.error, OutOfGrid)
        assert rec.n_steps > 0 and rec.column("z")[-1].max() <= 10.0 + 1e-9
