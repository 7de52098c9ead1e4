import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad, simpson

from fpkernel.checks import pde_convergence
from fpkernel.dynamics import (
    SdeSpec,
    SpectralFunction,
    beta_density,
    euler_maruyama,
    evolve,
    gaussian_bump,
    make_rng,
    project,
    sample_evolved,
    simulate_paths,
    sine_error,
    synth_measurements,
    tent,
)
from fpkernel.kernels import KernelModel

NEUMANN = KernelModel("neumann_heat")
DIRICHLET = KernelModel("dirichlet_heat")
OU = KernelModel("ornstein_uhlenbeck")
GRID = np.linspace(0.0, 1.0, 2001)


def neumann_images(t, x, y, terms=6):
    """Reflecting heat kernel on [0, 1] with unit diffusion, by the method of images."""
    m = np.arange(-terms, terms + 1)
    g = lambda z: np.exp(-(z**2) / (4 * t)) / math.sqrt(4 * math.pi * t)  # noqa: E731
    return float(np.sum(g(x - y + 2 * m) + g(x + y + 2 * m)))


@pytest.fixture(scope="module")
def beta_fn():
    return project(NEUMANN, beta_density, 400)


class TestProject:
    def test_constant_neumann(self):
        f = project(NEUMANN, lambda x: np.ones_like(x), 10)
        np.testing.assert_allclose(f.coefficients, [1.0] + [0.0] * 9, atol=1e-10)

    def test_beta_unit_mass(self, beta_fn):
        assert beta_fn.coefficients[0] == pytest.approx(1.0, abs=1e-10)

    def test_dirichlet_sine(self):
        f = project(DIRICHLET, lambda x: np.sin(np.pi * x), 6)
        np.testing.assert_allclose(f.coefficients, [1 / math.sqrt(2)] + [0.0] * 5, atol=1e-10)
        np.testing.assert_array_equal(f.modes, np.arange(1, 7))

    def test_ou_ground_state(self):
        # the stationary density has all its weight on the ground mode
        s = OU.length_scale
        rho = lambda x: np.exp(-(x**2) / (2 * s * s)) / (s * math.sqrt(2 * math.pi))  # noqa: E731
        f = project(OU, rho, 6)
        assert abs(f.coefficients[0]) > 0.1
        np.testing.assert_allclose(f.coefficients[1:], 0.0, atol=1e-8)
        np.testing.assert_allclose(evolve(f, 0.7, np.array([-0.5, 0.3])), rho(np.array([-0.5, 0.3])), rtol=1e-8)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError, match="nodes"):
            project(NEUMANN, beta_density, 5, quad_nodes=2)


class TestEvolve:
    def test_reconstruction_at_zero(self):
        g = lambda x: np.sin(np.pi * x) + 0.3 * np.sin(4 * np.pi * x)  # noqa: E731
        f = project(DIRICHLET, g, 8)
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(evolve(f, 0.0, x), g(x), atol=1e-10)

    def test_stationary_constant(self):
        f = project(NEUMANN, lambda x: np.ones_like(x), 5)
        np.testing.assert_allclose(evolve(f, 0.37, GRID[::100]), 1.0, atol=1e-10)

    def test_beta_against_convolution_oracle(self, beta_fn):
        want, _ = quad(lambda y: neumann_images(0.1, 0.5, y) * beta_density(y), 0, 1, epsabs=1e-13, epsrel=1e-13)
        assert evolve(beta_fn, 0.1, 0.5) == pytest.approx(want, abs=1e-8)

    def test_negative_time(self, beta_fn):
        with pytest.raises(ValueError):
            evolve(beta_fn, -0.1, 0.5)

    def test_callable(self, beta_fn):
        assert beta_fn(0.3, 0.05) == evolve(beta_fn, 0.05, 0.3)

    @pytest.mark.parametrize("t", [0.0, 0.01, 0.05, 0.1])
    def test_neumann_mass_conserved(self, beta_fn, t):
        assert simpson(evolve(beta_fn, t, GRID), x=GRID) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("model", [NEUMANN, DIRICHLET], ids=["neumann", "dirichlet"])
    def test_relaxation_monotone(self, model):
        f = project(model, lambda x: tent(x) + 0.3 * x, 60)
        rest = f.coefficients[0] * model.basis(GRID, 0, 1)[:, 0] if model.first_mode == 0 else 0.0
        dist = [simpson((evolve(f, t, GRID) - rest) ** 2, x=GRID) for t in np.linspace(0, 0.3, 16)]
        assert np.all(np.diff(dist) <= 1e-14)

    @pytest.mark.parametrize("model", [NEUMANN, DIRICHLET], ids=["neumann", "dirichlet"])
    def test_solves_pde(self, model):
        f = project(model, lambda x: tent(x, 0.5, 1.0) + 0.2 * x, 40)
        _, order = pde_convergence(model, lambda x, t: evolve(f, t, x))
        assert order >= 1.9


class TestSampling:
    def test_uniform_ks(self):
        f = project(NEUMANN, lambda x: np.ones_like(x), 4)
        n = 2000
        x = sample_evolved(f, 0.1, n, seed=5)
        assert stats.kstest(x, "uniform").statistic < 1.63 / math.sqrt(n)

    def test_empty(self, beta_fn):
        assert sample_evolved(beta_fn, 0.01, 0, seed=0).size == 0

    def test_beta_mean(self, beta_fn):
        n = 10_000
        rho = evolve(beta_fn, 0.01, GRID)
        mean = simpson(GRID * rho, x=GRID)
        sd = math.sqrt(simpson(GRID**2 * rho, x=GRID) - mean**2)
        x = sample_evolved(beta_fn, 0.01, n, seed=1)
        assert abs(x.mean() - mean) <= 3 * sd / math.sqrt(n)

    def test_deterministic_and_streams_differ(self, beta_fn):
        a = sample_evolved(beta_fn, 0.01, 50, seed=3, stream=(1,))
        np.testing.assert_array_equal(a, sample_evolved(beta_fn, 0.01, 50, seed=3, stream=(1,)))
        assert not np.array_equal(a, sample_evolved(beta_fn, 0.01, 50, seed=3, stream=(2,)))

    def test_negative_density_rejected(self):
        f = project(DIRICHLET, lambda x: np.sin(2 * np.pi * x), 4)
        with pytest.raises(ValueError, match="negative"):
            sample_evolved(f, 0.01, 10, seed=0)

    def test_unbounded_rejected(self):
        with pytest.raises(ValueError, match="bounded"):
            sample_evolved(SpectralFunction(OU, np.array([1.0])), 0.1, 5, seed=0)

    def test_rng_is_pcg64(self):
        assert isinstance(make_rng(0).bit_generator, np.random.PCG64)


class TestEulerMaruyama:
    def test_constant_path(self):
        spec = SdeSpec(lambda x: 0.0 * x, lambda x: 0.0 * x)
        np.testing.assert_array_equal(euler_maruyama(spec, 0.7, 0.01, 50, seed=0), 0.7)

    def test_ou_mean(self):
        spec = SdeSpec.from_model(OU)
        final = simulate_paths(spec, 2.0, 1e-3, 1000, 10_000, seed=0, keep_paths=False)
        se = final.std(ddof=1) / math.sqrt(final.size)
        assert abs(final.mean() - 2 * math.exp(-1)) <= 3 * se

    def test_reflected_occupation_uniform(self):
        # with dt = 1 the reflected walk decorrelates in a step, so chi-square on visits applies
        spec = SdeSpec.from_model(NEUMANN)
        path = euler_maruyama(spec, 0.3, 1.0, 100_000, seed=0)[1:]
        counts = np.histogram(path, bins=20, range=(0, 1))[0]
        assert stats.chisquare(counts).pvalue > 0.01

    def test_reflection_stays_inside(self):
        path = euler_maruyama(SdeSpec.from_model(NEUMANN), 0.5, 0.01, 2000, seed=4)
        assert path.min() >= 0.0 and path.max() <= 1.0

    def test_absorption_stops(self):
        path = euler_maruyama(SdeSpec.from_model(DIRICHLET), 0.5, 0.01, 5000, seed=2)
        assert path.size < 5001 and path[-1] in (0.0, 1.0)
        assert np.all((path[:-1] > 0) & (path[:-1] < 1))

    def test_deterministic(self):
        spec = SdeSpec.from_model(OU)
        np.testing.assert_array_equal(
            simulate_paths(spec, 1.0, 0.01, 30, 4, seed=9), simulate_paths(spec, 1.0, 0.01, 30, 4, seed=9)
        )

    def test_paths_independent_of_count(self):
        # path i depends only on (seed, i)
        spec = SdeSpec.from_model(OU)
        a = simulate_paths(spec, 1.0, 0.01, 30, 2, seed=9)
        b = simulate_paths(spec, 1.0, 0.01, 30, 5, seed=9)
        np.testing.assert_array_equal(a, b[:2])

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            simulate_paths(SdeSpec.from_model(OU), 0.0, 0.0, 3, 1, seed=0)
        with pytest.raises(ValueError):
            SdeSpec(abs, abs, boundary="sticky")


class TestSynthMeasurements:
    def test_no_error_is_truth(self):
        x = np.linspace(0, 1, 11)
        snap = synth_measurements(lambda x, t: gaussian_bump(x, t), x, 0.3)
        np.testing.assert_array_equal(snap.y, gaussian_bump(x, 0.3))

    def test_tent_sensors(self):
        x = np.linspace(0, 1, 100)
        snap = synth_measurements(lambda x, t: tent(x), x, 0.01)
        np.testing.assert_allclose(snap.y, 0.5 - np.abs(x - 0.5), rtol=0, atol=0)

    def test_sine_error(self):
        snap = synth_measurements(lambda x, t: 0.0 * x, [0.25], 0.1, sine_error)
        assert snap.y[0] == pytest.approx(0.2, abs=1e-15)

    def test_gaussian_noise_seeded(self):
        truth = lambda x, t: 0.0 * x  # noqa: E731
        a = synth_measurements(truth, np.zeros(500), 0.1, 0.5, seed=1)
        b = synth_measurements(truth, np.zeros(500), 0.1, 0.5, seed=1)
        np.testing.assert_array_equal(a.y, b.y)
        assert a.y.std() == pytest.approx(0.5, rel=0.1)

    def test_gaussian_bump_diffusion(self):
        # variance grows by 2 D t under free heat flow
        x = np.linspace(-8, 9, 4001)
        rho = gaussian_bump(x, 0.6, 0.5)
        assert simpson((x - 0.5) ** 2 * rho, x=x) == pytest.approx(1.6, rel=1e-8)
