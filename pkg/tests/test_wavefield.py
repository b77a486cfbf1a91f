import math

import numpy as np
import pytest

from conftest import make_bundle
from dbs_traj import dynamics, wavefield
from dbs_traj.core import LaunchProfile, Mode, Scenario, Shape, launch_bundle
from dbs_traj.errors import CausticError
from dbs_traj.potentials import Free, LensSlab
from dbs_traj.validation import stencil_errors


def _seed_flux(b):
    """Set conserved fluxes so the bundle's current amplitudes are reproduced."""
    g = wavefield.wavefront_geometry(b)
    b.flux = b.amplitude ** 2 * b.p_abs * b.sigma
    seg = np.hypot(np.diff(b.x), np.diff(b.z))
    tube_amp = 0.5 * (b.amplitude[1:] + b.amplitude[:-1])
    b.tube_flux = tube_amp ** 2 * 0.5 * (b.p_abs[1:] + b.p_abs[:-1]) * seg
    return g


class TestGeometry:
    def test_planar_front(self, uniform_grid):
        b = make_bundle(uniform_grid)
        g = wavefield.wavefront_geometry(b)
        assert np.allclose(b.sigma, 0.1, rtol=1e-12)
        assert np.allclose(g.tangent, [1.0, 0.0]) and np.allclose(g.normal, [0.0, 1.0])
        assert np.all(np.diff(g.arclen) > 0)
        assert g.arclen[len(g.arclen) // 2] == 0.0

    def test_spacing_scales_sigma(self, uniform_grid):
        a = make_bundle(uniform_grid)
        b = make_bundle(2.0 * uniform_grid)
        wavefield.wavefront_geometry(a)
        wavefield.wavefront_geometry(b)
        assert np.allclose(b.sigma, 2.0 * a.sigma, rtol=1e-12)

    def test_coincident_rays_are_a_caustic(self, uniform_grid):
        x = uniform_grid.copy()
        x[10] = x[11]
        with pytest.raises(CausticError) as info:
            wavefield.wavefront_geometry(make_bundle(x))
        assert 10 in info.value.pairs

    def test_crossed_rays_are_a_caustic(self, uniform_grid):
        x = uniform_grid.copy()
        x[10], x[11] = x[11], x[10]
        with pytest.raises(CausticError):
            wavefield.wavefront_geometry(make_bundle(x))

    def test_classical_mode_records_instead_of_raising(self, uniform_grid):
        x = uniform_grid.copy()
        x[10], x[11] = x[11], x[10]
        g = wavefield.wavefront_geometry(make_bundle(x, mode=Mode.CLASSICAL))
        assert g.crossed[10] and g.crossed.sum() >= 1

    def test_tangent_perpendicular_to_normal_on_tilted_front(self):
        s = np.linspace(-1, 1, 31)
        theta = 0.3 * s
        b = make_bundle(s, z=0.2 * s ** 2, px=100 * np.sin(theta), pz=100 * np.cos(theta))
        g = wavefield.wavefront_geometry(b)
        dots = np.einsum("ij,ij->i", g.tangent, g.normal)
        assert np.max(np.abs(dots)) <= 1e-12
        assert np.allclose(np.hypot(*g.tangent.T), 1.0)
        assert np.all(np.diff(g.arclen) > 0)


class TestTransport:
    def test_parallel_beam_keeps_amplitude(self, uniform_grid):
        amp = np.exp(-uniform_grid ** 2)
        b = make_bundle(uniform_grid, amplitude=amp)
        _seed_flux(b)
        b.z = b.z + 123.0
        wavefield.refresh(b)
        assert np.allclose(b.amplitude, amp, rtol=1e-14)

    def test_doubled_spacing_shrinks_amplitude(self, uniform_grid):
        b = make_bundle(uniform_grid, amplitude=np.full(41, 0.8))
        _seed_flux(b)
        wide = b.with_state(0.0, 2.0 * b.x, b.z, b.px, b.pz)
        wavefield.wavefront_geometry(wide)
        wavefield.transport_amplitude(wide)
        assert np.allclose(wide.amplitude, 0.8 / math.sqrt(2.0), rtol=1e-14)

    def test_flux_is_recovered_after_steps(self):
        s = Scenario(n_rays=101)
        b = launch_bundle(s)
        for _ in range(5):
            b, _ = dynamics.step(b, s.potential, 5e-4)
        f = b.amplitude ** 2 * b.p_abs * b.sigma
        assert np.max(np.abs(f / b.flux - 1.0)) <= 1e-12


class TestWavePotential:
    def test_gaussian_centre_value(self):
        b = launch_bundle(Scenario(n_rays=801))
        assert b.w_values[400] == pytest.approx(1.0, rel=1e-4)

    def test_uniform_amplitude_gives_zero(self, uniform_grid):
        b = make_bundle(uniform_grid)
        _seed_flux(b)
        wavefield.refresh(b)
        assert np.max(np.abs(b.w_values)) < 1e-10
        assert np.max(np.abs(b.w_grad)) < 1e-8

    def test_classical_mode_is_zero(self):
        b = launch_bundle(Scenario(n_rays=41, mode=Mode.CLASSICAL))
        assert np.all(b.w_values == 0) and np.all(b.w_grad == 0)

    def test_relativistic_prefactor(self):
        nr = launch_bundle(Scenario(n_rays=41))
        rel = launch_bundle(Scenario(n_rays=41, mode=Mode.RELATIVISTIC))
        assert np.allclose(rel.w_values * rel.params.energy, nr.w_values, rtol=1e-12)
        assert wavefield.wave_potential_prefactor(Mode.NON_RELATIVISTIC, 7.0) == -0.5
        assert wavefield.wave_potential_prefactor(Mode.RELATIVISTIC, 4.0) == -0.125

    def test_second_order_convergence(self):
        h, err = stencil_errors()
        slope = np.polyfit(np.log(h), np.log(err), 1)[0]
        assert 1.8 <= slope <= 2.2

    def test_ratio_stencil_on_exact_gaussian(self):
        s = np.linspace(-2, 2, 81)
        lap = wavefield.laplacian_over_amplitude(-s * s, s)
        exact = 4 * s * s - 2
        assert np.isnan(lap[0]) and np.isnan(lap[-1])
        assert np.max(np.abs(lap[1:-1] - exact[1:-1]) / (1.0 + np.abs(exact[1:-1]))) < 2e-3

    def test_tiny_amplitudes_stay_finite(self):
        b = launch_bundle(Scenario(n_rays=101, launch=LaunchProfile(Shape.BELL, span=2.25)))
        assert np.all(np.isfinite(b.w_values)) and np.all(np.isfinite(b.w_grad))


class TestGradient:
    def test_outward_force_on_gaussian(self):
        b = launch_bundle(Scenario(n_rays=201))
        # W = 1 - 2 x^2, so -dW/dx = 4 x points away from the axis
        assert np.all(-b.w_grad[101:, 0] > 0) and np.all(-b.w_grad[:100, 0] < 0)
        assert np.allclose(-b.w_grad[125, 0], 4.0, rtol=2e-3)

    def test_symmetric_profile_has_zero_centre_gradient(self):
        b = launch_bundle(Scenario(n_rays=101))
        assert b.w_grad[50, 0] == 0.0 and b.w_grad[50, 1] == 0.0

    def test_gradient_is_perpendicular_to_momentum(self):
        eps = 1e-4
        z_r = math.pi / eps
        s = Scenario(n_rays=61, z_max=0.3 * z_r, potential=LensSlab(86.9, 0.05 * z_r, 0.15 * z_r))
        rec_b = launch_bundle(s)
        b = rec_b
        for _ in range(40):
            b, _ = dynamics.step(b, s.potential, dynamics.suggest_dt(b, s.potential, 1e-2, 0.9))
        assert np.max(np.abs(b.px)) > 1.0  # the front is genuinely curved
        gp = np.abs(np.einsum("ij,ij->i", b.w_grad, b.momenta))
        scale = np.hypot(*b.w_grad.T) * b.p_abs
        assert np.all(gp <= 1e-12 * scale + 1e-300)

    def test_free_potential_leaves_gradient_tangential(self):
        b = launch_bundle(Scenario(n_rays=31, potential=Free()))
        assert np.all(b.w_grad[:, 1] == 0.0)
