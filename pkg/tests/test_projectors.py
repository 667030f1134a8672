import math

import numpy as np
import pytest
import scipy.stats

from covbvm import (
    ChiSquareMixture,
    DatasetSpec,
    EigenspaceSelection,
    build_gamma,
    default_inverse_wishart_prior,
    default_sampler,
    empirical_projector,
    kolmogorov_distance,
    mixture_cdf,
    mixture_from_gamma,
    model_from_spectrum,
    posterior_projector_statistic,
    projector_bvm_check,
    sample_dataset,
    sample_posterior,
)
from covbvm.projectors import projector_from_entries


class TestProjectorFromEntries:
    def test_diagonal_leading(self):
        proj = projector_from_entries(np.diag([3.0, 2.0, 1.0]), np.array([0]))
        assert np.allclose(proj, np.diag([1.0, 0.0, 0.0]))

    def test_diagonal_middle_pair(self):
        proj = projector_from_entries(np.diag([3.0, 2.0, 1.0]), np.array([1, 2]))
        assert np.allclose(proj, np.diag([0.0, 1.0, 1.0]))

    @pytest.mark.parametrize("seed", range(3))
    def test_idempotent_with_correct_trace(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((5, 5))
        mat = a @ a.T + np.eye(5)
        idx = np.array([0, 1, 3])
        proj = projector_from_entries(mat, idx)
        assert np.allclose(proj @ proj, proj, atol=1e-12)
        assert np.trace(proj) == pytest.approx(3.0, abs=1e-12)
        assert np.allclose(proj, proj.T)

    def test_rotation_covariance(self):
        rng = np.random.default_rng(9)
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        base = np.diag([4.0, 3.0, 2.0, 1.0])
        idx = np.array([0, 1])
        rotated = projector_from_entries(q @ base @ q.T, idx)
        assert np.allclose(rotated, q @ np.diag([1.0, 1.0, 0, 0]) @ q.T, atol=1e-10)

    def test_matches_true_projector_on_ground_truth(self):
        model = model_from_spectrum([4.0, 1.0], [2, 2], rotation_seed=2)
        sel = EigenspaceSelection(1, 1)
        proj = projector_from_entries(model.sigma_star.entries, sel.index_set(model))
        assert np.allclose(proj, model.group_projectors[0], atol=1e-10)


class TestProjectorStatistic:
    def setup_method(self):
        self.model = model_from_spectrum([4.0, 1.0, 0.5], [1, 1, 1], rotation_seed=3)
        self.sel = EigenspaceSelection(1, 1)
        self.data = sample_dataset(DatasetSpec(self.model, "gaussian", 2000, seed=4))
        self.draws = sample_posterior(
            default_sampler(default_inverse_wishart_prior(3), self.data, 5), 5000
        )

    def test_statistic_nonnegative_and_bounded(self):
        stat = posterior_projector_statistic(
            self.model, self.sel, self.draws, self.data
        )
        m_j = 1
        assert np.all(stat.law.values >= 0)
        # || P - Phat ||_F^2 <= 2 m_J for rank-m_J projectors
        assert np.all(stat.law.values <= 2 * m_j * self.data.n)

    def test_empirical_projector_matches(self):
        stat = posterior_projector_statistic(
            self.model, self.sel, self.draws, self.data
        )
        phat = empirical_projector(self.data, self.model, self.sel)
        assert np.allclose(stat.empirical_projector, phat)
        assert np.allclose(phat @ phat, phat, atol=1e-12)

    def test_well_separated_spectrum_has_no_degenerates(self):
        stat = posterior_projector_statistic(
            self.model, self.sel, self.draws, self.data
        )
        assert stat.near_degenerate_count == 0

    def test_statistic_matches_mixture(self):
        stat = posterior_projector_statistic(
            self.model, self.sel, self.draws, self.data
        )
        mixture = mixture_from_gamma(build_gamma(self.model, self.sel))
        ks = kolmogorov_distance(stat.law, lambda x: mixture.cdf(x, seed=6))
        assert ks < 0.08
        assert stat.law.values.mean() == pytest.approx(mixture.mean, rel=0.25)


class TestChiSquareMixture:
    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError):
            ChiSquareMixture([1.0, 0.0])

    def test_mean_and_variance(self):
        mix = ChiSquareMixture([0.625, 4.0])
        assert mix.mean == pytest.approx(4.625)
        assert mix.variance == pytest.approx(2 * (0.625**2 + 16.0))

    def test_equal_weights_closed_form(self):
        # two unit weights: sum of two standard squared normals, exponential
        # with mean two, so the median is 2 log 2
        mix = ChiSquareMixture([1.0, 1.0])
        assert mix.equal_weights
        assert mix.cdf(2 * math.log(2.0)) == pytest.approx(0.5)
        assert mix.cdf(0.0) == 0.0

    def test_cdf_limits(self):
        mix = ChiSquareMixture([0.5, 2.0, 3.0])
        assert mixture_cdf(mix, -1.0) == 0.0
        assert mixture_cdf(mix, 1e6) == pytest.approx(1.0)

    def test_scaled_equal_weights_match_chi2(self):
        mix = ChiSquareMixture([8.0 / 9.0, 8.0 / 9.0])
        x = np.linspace(0.0, 10.0, 50)
        assert np.allclose(mix.cdf(x), scipy.stats.chi2.cdf(x, df=2, scale=8.0 / 9.0))

    def test_monte_carlo_matches_oracle(self):
        mix = ChiSquareMixture([0.625, 4.0])
        rng = np.random.default_rng(0)
        z = rng.standard_normal((1_000_000, 2))
        oracle = np.sort(z[:, 0] ** 2 * 0.625 + z[:, 1] ** 2 * 4.0)
        x = np.array([1.0, 3.0, 5.0, 10.0])
        oracle_cdf = np.searchsorted(oracle, x) / len(oracle)
        assert np.allclose(mix.cdf(x, mc_draws=200_000, seed=1), oracle_cdf, atol=0.01)

    def test_equal_weight_mc_agrees_with_analytic(self):
        mix = ChiSquareMixture([2.0, 2.0, 2.0])
        x = np.linspace(0.5, 20.0, 21)
        mc = np.searchsorted(np.sort(mix.sample(100_000, seed=2)), x) / 100_000
        assert np.max(np.abs(mc - mix.cdf(x))) < 0.01

    def test_sample_moments(self):
        mix = ChiSquareMixture([1.0, 3.0])
        draws = mix.sample(200_000, seed=3)
        assert draws.mean() == pytest.approx(mix.mean, rel=0.02)
        assert draws.var() == pytest.approx(mix.variance, rel=0.05)

    def test_sample_deterministic(self):
        mix = ChiSquareMixture([1.0, 2.0])
        assert np.array_equal(mix.sample(1000, seed=4), mix.sample(1000, seed=4))


class TestProjectorBvmCheck:
    def test_end_to_end_report(self):
        model = model_from_spectrum([4.0, 1.0], [1, 2], rotation_seed=5)
        spec = DatasetSpec(model, "gaussian", 2000, seed=6)
        report = projector_bvm_check(
            model,
            EigenspaceSelection(1, 1),
            default_inverse_wishart_prior(3),
            spec,
            count=4000,
            l_star_j=1.0,
            seed=7,
            reference_draws=50_000,
            concentration_replications=30,
        )
        assert report.ks_distance < 0.1
        assert report.precondition_ok
        assert report.budget.total > 0
        assert report.near_degenerate_count == 0
        doc = report.to_json_dict()
        assert doc["ks"] == report.ks_distance
        assert doc["budget"]["context"] == "projector"
