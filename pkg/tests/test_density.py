import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from fpkernel.density import (
    DensityEstimate,
    embed_snapshot_estimator,
    evaluate_density,
    kde_snapshot,
    kme_combined,
    kme_risk,
    mass_and_negativity_report,
    renormalize,
    snapshot_weights,
)
from fpkernel.dynamics import beta_density, project, sample_evolved
from fpkernel.kernels import KernelModel
from fpkernel.linalg import sym_sqrt_psd
from fpkernel.snapshots import Snapshot, SnapshotSet

NEUMANN = KernelModel("neumann_heat")
DIRICHLET = KernelModel("dirichlet_heat")


def samples(rng, sizes, times, lo=0.0, hi=1.0):
    return SnapshotSet([Snapshot(t, rng.uniform(lo, hi, n)) for n, t in zip(sizes, times)])


@pytest.fixture(scope="module")
def beta_experiment():
    f = project(NEUMANN, beta_density, 400)
    data = SnapshotSet(
        [Snapshot(t, sample_evolved(f, t, 100, seed=0, stream=(k,))) for k, t in enumerate((0.01, 0.05))]
    )
    return f, data


def direct_risk(estimate, data):
    """Risk written out entry by entry, as an independent check of kme_risk."""
    model, beta, c = estimate.model, estimate.coefficients, estimate.centers
    total = 0.0
    for snap in data:
        n = len(snap)
        quad_term = sum(beta[a] * beta[b] * model(snap.t, c[a], c[b]) for a in range(c.size) for b in range(c.size))
        cross = sum(beta[a] * model(snap.t, x, c[a]) for x in snap.x for a in range(c.size)) / n
        const = sum(model(snap.t, x, x) for x in snap.x) / n
        total += quad_term - 2 * cross + const
    return total / len(data)


class TestKdeSnapshot:
    def test_equal_weights(self):
        est = kde_snapshot(NEUMANN, [0.1, 0.5, 0.7], t=0.02)
        np.testing.assert_array_equal(est.coefficients, np.full(3, 1 / 3))

    def test_single_point_is_kernel_with_unit_mass(self):
        est = kde_snapshot(NEUMANN, [0.3])
        x = np.linspace(0, 1, 7)
        np.testing.assert_allclose(est(x, 0.05), NEUMANN(0.05, x, 0.3), rtol=1e-14)
        mass, _ = mass_and_negativity_report(est, 0.05)
        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_pair(self):
        est = kde_snapshot(NEUMANN, [0.25, 0.75])
        u = np.linspace(0, 0.5, 11)
        np.testing.assert_allclose(est(0.5 - u, 0.03), est(0.5 + u, 0.03), rtol=1e-12)

    def test_stationary_limit(self, rng):
        est = kde_snapshot(NEUMANN, rng.uniform(0, 1, 20))
        np.testing.assert_allclose(est(np.linspace(0, 1, 21), 5.0), 1.0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            kde_snapshot(NEUMANN, [])

    def test_outside_domain(self):
        with pytest.raises(ValueError):
            kde_snapshot(NEUMANN, [1.2])


class TestKmeCombined:
    @pytest.mark.parametrize("model", [NEUMANN, DIRICHLET], ids=["neumann", "dirichlet"])
    @pytest.mark.parametrize("n", [1, 5, 50])
    def test_single_snapshot_equal_weights(self, model, n, rng):
        data = samples(rng, [n], [0.02])
        beta = kme_combined(model, data).coefficients
        np.testing.assert_allclose(beta, 1.0 / n, atol=1e-8)

    def test_identical_positions_symmetric(self, rng):
        # snapshot times must increase, so the duplicate is taken at a later time;
        # exchanging the two copies of each center maps minimizers to minimizers
        x = rng.uniform(0, 1, 6)
        data = SnapshotSet([Snapshot(0.05, x), Snapshot(0.08, x)])
        beta = kme_combined(NEUMANN, data).coefficients
        np.testing.assert_allclose(beta[:6], beta[6:], atol=1e-8)

    def test_beats_single_snapshot_estimators(self, beta_experiment):
        _, data = beta_experiment
        combined = kme_risk(kme_combined(NEUMANN, data), data)
        for k in range(2):
            assert combined <= kme_risk(embed_snapshot_estimator(NEUMANN, data, k), data) + 1e-10

    def test_beats_random_candidates(self, rng):
        data = samples(rng, [8, 5], [0.02, 0.06])
        est = kme_combined(NEUMANN, data)
        best = kme_risk(est, data)
        for _ in range(100):
            cand = DensityEstimate(NEUMANN, est.coefficients + 0.05 * rng.standard_normal(13), est.centers)
            assert kme_risk(cand, data) >= best - 1e-10

    def test_empty_snapshot(self):
        with pytest.raises(ValueError, match="empty"):
            kme_combined(NEUMANN, SnapshotSet([Snapshot(0.1, [0.5]), Snapshot(0.2, [])]))

    def test_union_of_centers(self, rng):
        data = samples(rng, [3, 4], [0.02, 0.05])
        np.testing.assert_array_equal(kme_combined(NEUMANN, data).centers, data.positions)

    def test_runtime_small(self, rng):
        start = time.perf_counter()
        kme_combined(NEUMANN, samples(rng, [100, 100], [0.01, 0.05]))
        assert time.perf_counter() - start < 5.0


class TestKmeRisk:
    def test_matches_entrywise_formula(self, rng):
        data = samples(rng, [3, 2], [0.02, 0.07])
        est = DensityEstimate(NEUMANN, rng.standard_normal(5), data.positions)
        assert kme_risk(est, data) == pytest.approx(direct_risk(est, data), rel=1e-12)

    def test_zero_coefficients_leave_constant(self, rng):
        data = samples(rng, [3, 4], [0.02, 0.05])
        est = DensityEstimate(NEUMANN, np.zeros(7), data.positions)
        want = np.mean([np.mean(NEUMANN(s.t, s.x, s.x)) for s in data])
        assert kme_risk(est, data) == pytest.approx(want, rel=1e-14)

    def test_equal_weights_optimal_for_one_snapshot(self, rng):
        data = samples(rng, [6], [0.03])
        best = kme_risk(kde_snapshot(NEUMANN, data.positions), data)
        for _ in range(100):
            cand = DensityEstimate(NEUMANN, 1 / 6 + 0.02 * rng.standard_normal(6), data.positions)
            assert kme_risk(cand, data) >= best - 1e-12

    def test_difference_equals_stacked_objective(self, rng):
        data = samples(rng, [4, 3], [0.02, 0.05])
        x = data.positions
        roots = [sym_sqrt_psd(NEUMANN.gram(x, s.t, x)) for s in data]

        def objective(beta):
            return sum(np.sum((r @ snapshot_weights(data, k) - r @ beta) ** 2) for k, r in enumerate(roots)) / len(data)

        a, b = rng.standard_normal(7), rng.standard_normal(7)
        ra = kme_risk(DensityEstimate(NEUMANN, a, x), data)
        rb = kme_risk(DensityEstimate(NEUMANN, b, x), data)
        assert ra - rb == pytest.approx(objective(a) - objective(b), abs=1e-10)


class TestEvaluation:
    def test_single_center(self):
        est = DensityEstimate(DIRICHLET, [1.0], [0.4])
        assert evaluate_density(est, 0.3, 0.02) == pytest.approx(DIRICHLET(0.02, 0.3, 0.4), rel=1e-14)

    @given(seed=st.integers(0, 10_000))
    def test_linear_in_coefficients(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.uniform(0, 1, 5)
        a = DensityEstimate(NEUMANN, rng.standard_normal(5), c)
        b = DensityEstimate(NEUMANN, rng.standard_normal(5), c)
        x = np.linspace(0, 1, 9)
        np.testing.assert_allclose((a + b)(x, 0.04), a(x, 0.04) + b(x, 0.04), atol=1e-12)

    def test_add_needs_shared_centers(self):
        with pytest.raises(ValueError, match="centers"):
            DensityEstimate(NEUMANN, [1.0], [0.1]) + DensityEstimate(NEUMANN, [1.0], [0.2])

    def test_coefficient_count_checked(self):
        with pytest.raises(ValueError):
            DensityEstimate(NEUMANN, [1.0, 2.0], [0.1])

    @pytest.mark.parametrize("model", [NEUMANN, DIRICHLET], ids=["neumann", "dirichlet"])
    def test_evolution_consistency(self, model, rng):
        # density at t equals the density at s < t pushed forward by the kernel
        est = DensityEstimate(model, rng.uniform(0.1, 1, 4), rng.uniform(0.1, 0.9, 4))
        s, t = 0.01, 0.03
        x0 = 0.37
        pushed, _ = quad(lambda y: model(t - s, x0, y) * est(y, s), 0, 1, epsabs=1e-12, limit=200)
        assert pushed == pytest.approx(est(x0, t), abs=1e-6)

    def test_neumann_mass_equals_weight_sum(self, rng):
        est = DensityEstimate(NEUMANN, rng.uniform(-0.2, 0.6, 6), rng.uniform(0, 1, 6))
        mass, _ = mass_and_negativity_report(est, 0.02)
        assert mass == pytest.approx(est.coefficients.sum(), abs=1e-8)

    def test_mass_linearity(self):
        est = DensityEstimate(NEUMANN, [0.4, 0.5], [0.2, 0.6])
        assert mass_and_negativity_report(est, 0.05)[0] == pytest.approx(0.9, abs=1e-8)

    def test_mass_unbounded_unsupported(self):
        est = DensityEstimate(KernelModel("gaussian_heat"), [1.0], [0.0])
        with pytest.raises(NotImplementedError):
            mass_and_negativity_report(est, 0.1)

    def test_combined_mass_reported(self, beta_experiment):
        _, data = beta_experiment
        mass, low = mass_and_negativity_report(kme_combined(NEUMANN, data), 0.1)
        assert np.isfinite(mass) and np.isfinite(low)


class TestRenormalize:
    def test_clips_and_rescales(self):
        est = DensityEstimate(NEUMANN, [0.8, -0.3, 0.6], [0.2, 0.5, 0.8])
        out = renormalize(est, 0.05)
        assert out.renormalized and out.coefficients.min() >= 0
        assert mass_and_negativity_report(out, 0.05)[0] == pytest.approx(1.0, abs=1e-8)
        assert not est.renormalized

    def test_no_positive_mass(self):
        with pytest.raises(ValueError, match="mass"):
            renormalize(DensityEstimate(NEUMANN, [-1.0], [0.5]), 0.05)
