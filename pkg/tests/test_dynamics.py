import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigvalsh

from potmeter.dynamics import (
    EvolutionParams,
    LatticeHamiltonian,
    build_hamiltonian,
    check_minimal_coupling_relation,
    evolve,
    ground_state_energy,
    lattice_norm,
    lattice_phase,
    link_phases,
)
from potmeter.errors import PotmeterWarning, SolverBreakdown, TwistOnOpenGrid
from potmeter.gauge import GaugeFunction, VectorPotential, loop_integral, peierls_phase
from potmeter.lattice import Gaussian, Grid1D, PhysicalConstants, PlaneWave, WaveFunction, prepare_state

pytestmark = pytest.mark.usefixtures("quiet")


def quantized_bump(grid, windings=1):
    """Gaussian bump rescaled so the ring flux is exactly 2 pi * windings."""
    unit = VectorPotential.gaussian_bump(grid, 1.0, 0.0, 2.0)
    A0 = 2 * np.pi * windings / loop_integral(unit)
    return VectorPotential(grid, A0 * unit.a)


class TestHamiltonian:
    def test_dispersion(self, consts):
        g = Grid1D(128, -7.0, 7.0, "ring")
        H = build_hamiltonian(g, consts=PhysicalConstants(hbar=0.8, mass=1.7))
        for m in (0, 3, 17, -40):
            k = 2 * np.pi * m / g.length
            psi = np.exp(1j * k * (g.x - g.x_min))
            E = 0.8**2 / (1.7 * g.dx**2) * (1 - np.cos(k * g.dx))
            np.testing.assert_allclose(H.matvec(psi), E * psi, atol=1e-9 * max(1.0, E))

    def test_constant_field_shifts_spectrum(self, consts):
        g = Grid1D(64, -7.0, 7.0, "ring")
        a0 = 2 * np.pi * 3 / g.length
        H = build_hamiltonian(g, VectorPotential.constant(g, a0), consts=consts)
        k = 2 * np.pi * np.fft.fftfreq(g.n, g.dx)
        expected = np.sort((1 - np.cos((k - a0) * g.dx)) / g.dx**2)
        np.testing.assert_allclose(eigvalsh(H.to_sparse().toarray()), expected, atol=1e-9)

    def test_spectrum_unchanged_by_quantized_flux(self, consts):
        g = Grid1D(96, -7.0, 7.0, "ring")
        E0 = eigvalsh(build_hamiltonian(g, consts=consts).to_sparse().toarray())
        E1 = eigvalsh(build_hamiltonian(g, quantized_bump(g), consts=consts).to_sparse().toarray())
        np.testing.assert_allclose(E1, E0, atol=1e-9)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_hermitian(self, seed):
        g = Grid1D(64, -7.0, 7.0, "ring")
        c = PhysicalConstants()
        r = np.random.default_rng(seed)
        A = VectorPotential(g, r.normal(size=g.n))
        H = build_hamiltonian(g, A, V=r.normal(size=g.n), flux_twist=r.uniform(-3, 3), consts=c)
        phi = r.normal(size=g.n) + 1j * r.normal(size=g.n)
        psi = r.normal(size=g.n) + 1j * r.normal(size=g.n)
        lhs = np.vdot(phi, H.matvec(psi))
        rhs = np.conj(np.vdot(psi, H.matvec(phi)))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_link_phase_sum_is_peierls_phase(self, consts):
        g = Grid1D(256, -7.0, 7.0)
        A = VectorPotential.gaussian_bump(g, 0.7, 0.0, 2.0)
        assert len(link_phases(A, g, consts)) == g.n - 1
        psi0 = prepare_state(g, Gaussian(0, 0, 1.0))
        np.testing.assert_allclose(
            np.exp(1j * lattice_phase(A, g, consts)) * psi0.amp, peierls_phase(psi0, A, consts).amp, atol=1e-15
        )

    def test_ring_closure_phase(self, ring, consts):
        A = VectorPotential.gaussian_bump(ring, 0.7, 0.0, 2.0)
        H = build_hamiltonian(ring, A, flux_twist=0.4, consts=consts)
        assert H.closure_phase == pytest.approx(loop_integral(A) + 0.4, abs=1e-12)

    def test_twist_on_open_grid(self, consts):
        with pytest.raises(TwistOnOpenGrid):
            build_hamiltonian(Grid1D(32, 0, 1), flux_twist=0.1, consts=consts)

    def test_bad_potential_shape(self, ring, consts):
        with pytest.raises(ValueError):
            build_hamiltonian(ring, V=np.zeros(5), consts=consts)


class TestEvolve:
    def test_zero_steps(self, packet, ring, consts):
        out = evolve(packet, build_hamiltonian(ring, consts=consts), EvolutionParams(1e-3, 0))
        assert out is packet

    @pytest.mark.parametrize("kw", [{"dt": 0.0, "steps": 1}, {"dt": 1e-3, "steps": -1}, {"dt": 1e-3, "steps": 1.5}])
    def test_bad_params(self, kw):
        with pytest.raises(ValueError):
            EvolutionParams(**kw)

    @pytest.mark.parametrize("m", [1, 2])
    def test_eigenphase(self, ring, consts, m):
        k = 2 * np.pi * m / ring.length
        psi = prepare_state(ring, PlaneWave(k))
        H = build_hamiltonian(ring, consts=consts)
        E = (1 - np.cos(k * ring.dx)) / ring.dx**2
        t = 1.0
        out = evolve(psi, H, EvolutionParams(1e-3, 1000))
        phase_err = np.max(np.abs(np.angle(out.amp / (np.exp(-1j * E * t) * psi.amp))))
        assert phase_err / t < 1e-8

    def test_unitarity_long_run(self, consts):
        g = Grid1D(256, -7.0, 7.0, "ring")
        psi = prepare_state(g, Gaussian(0.0, 2.0, 1.0))
        H = build_hamiltonian(g, quantized_bump(g), V=0.1 * g.x**2, consts=consts)
        out = evolve(psi, H, EvolutionParams(1e-3, 10_000))
        assert abs(lattice_norm(out) - lattice_norm(psi)) < 1e-12

    def test_free_spreading(self, consts):
        g = Grid1D(1024, -16.0, 16.0)
        psi = prepare_state(g, Gaussian(0.0, 0.0, 1.0))
        out = evolve(psi, build_hamiltonian(g, consts=consts), EvolutionParams(1e-3, 500))
        rho = out.density / np.sum(out.density)
        width2 = np.sum(rho * g.x**2) - np.sum(rho * g.x) ** 2
        assert width2 == pytest.approx(1.0 + 0.25**2, rel=5e-4)

    def test_stability_warning(self, packet, ring, consts):
        with pytest.warns(PotmeterWarning, match="exceeds 0.5"):
            evolve(packet, build_hamiltonian(ring, consts=consts), EvolutionParams(1e-2, 1))

    def test_solver_breakdown(self, consts):
        g = Grid1D(16, 0.0, 1.0)
        tau = 0.5
        # 1 + i tau onsite vanishes on the diagonal of an uncoupled lattice
        H = LatticeHamiltonian(g, np.zeros(15), np.full(16, 1j / tau), 0.0, consts)
        with pytest.raises(SolverBreakdown):
            evolve(WaveFunction(g, np.ones(16)), H, EvolutionParams(1.0, 1))


class TestMinimalCoupling:
    def _pair(self, grid, A, consts, steps=1000, dt=1e-3, V=None, psi0=None):
        psi0 = psi0 or prepare_state(grid, Gaussian(0.0, 0.0, 1.2))
        p = EvolutionParams(dt, steps)
        psi0_t = evolve(psi0, build_hamiltonian(grid, None, V, consts=consts), p)
        psi_t = evolve(peierls_phase(psi0, A, consts), build_hamiltonian(grid, A, V, consts=consts), p)
        return psi0_t, psi_t

    def test_zero_field_is_exact(self, consts):
        g = Grid1D(256, -12.0, 12.0)
        A = VectorPotential.zero(g)
        assert check_minimal_coupling_relation(*self._pair(g, A, consts, steps=50), A, consts) == 0.0

    @pytest.mark.parametrize("dt", [1e-3, 1e-2, 0.1])
    def test_constant_open_any_dt(self, consts, dt):
        g = Grid1D(512, -12.0, 12.0)
        A = VectorPotential.constant(g, 0.3)
        assert check_minimal_coupling_relation(*self._pair(g, A, consts, steps=200, dt=dt), A, consts) <= 1e-10

    def test_quantized_bump_on_ring(self, consts):
        g = Grid1D(512, -7.0, 7.0, "ring")
        A = quantized_bump(g)
        psi0 = prepare_state(g, Gaussian(0.0, 1.0, 1.0))
        pair = self._pair(g, A, consts, psi0=psi0, V=0.05 * g.x**2)
        assert check_minimal_coupling_relation(*pair, A, consts) <= 1e-10

    def test_lattice_gauge_covariance(self, consts):
        g = Grid1D(512, -7.0, 7.0, "ring")
        psi = prepare_state(g, Gaussian(0.0, 1.0, 1.0))
        H = build_hamiltonian(g, VectorPotential.gaussian_bump(g, 0.7, 0.0, 2.0), consts=consts)
        lam = GaugeFunction.sine(g, 0.8, 2)
        gauge = np.exp(1j * lam.lam)
        p = EvolutionParams(1e-3, 300)
        a = evolve(psi.with_amp(gauge * psi.amp), H.gauge_transformed(lam.lam), p)
        b = evolve(psi, H, p)
        assert np.max(np.abs(a.amp - gauge * b.amp)) <= 1e-10


class TestAharonovBohm:
    def test_ground_energy_periodic(self, consts):
        g = Grid1D(128, -7.0, 7.0, "ring")
        A = VectorPotential.gaussian_bump(g, 0.7, 0.0, 2.0)
        E = lambda tw: ground_state_energy(build_hamiltonian(g, A, flux_twist=tw, consts=consts))
        for tw in (0.0, 0.9, 2.5):
            assert abs(E(tw + 2 * np.pi) - E(tw)) < 1e-9

    def test_minimum_at_zero_twist(self, consts):
        g = Grid1D(128, -7.0, 7.0, "ring")
        twists = np.linspace(-np.pi, np.pi, 25)
        E = [ground_state_energy(build_hamiltonian(g, flux_twist=t, consts=consts)) for t in twists]
        assert twists[int(np.argmin(E))] == pytest.approx(0.0, abs=1e-12)
        # free ring: E0(theta) = (1 - cos(theta dx / L)) / dx^2 for |theta| <= pi
        expected = (1 - np.cos(twists / g.length * g.dx)) / g.dx**2
        np.testing.assert_allclose(E, expected, atol=1e-10)
