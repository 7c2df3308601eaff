import numpy as np
import pytest

from components.abc_sampler import (KernelKind, KernelSpec, StatisticKind, abc_pilot, abc_run, choose_epsilon,
                                    simulated_distances, summary_statistic, weighted_summary)
from components.errors import ConfigurationError, NumericalError, ToleranceError
from components.helpers import make_generator
from components.priors import PriorSpec, ProposalSpec


class TestChooseEpsilon:
    def test_picks_order_statistic(self):
        distances = make_generator(0).permutation(np.arange(1, 10_001, dtype=float))
        assert choose_epsilon(distances, 0.01) == 100.0

    def test_full_rate_is_maximum(self):
        assert choose_epsilon([3.0, 1.0, 2.0], 1.0) == 3.0

    @pytest.mark.parametrize('rate', [0.0, 1.5])
    def test_rate_bounds(self, rate):
        with pytest.raises(ConfigurationError):
            choose_epsilon([1.0], rate)

    def test_empty_pilot(self):
        with pytest.raises(ConfigurationError):
            choose_epsilon([], 0.1)


class TestKernel:
    def test_sharp(self):
        kernel = KernelSpec(KernelKind.SHARP, 2.0)
        np.testing.assert_array_equal(kernel.acceptance([1.0, 2.0, 2.5]), [1.0, 1.0, 0.0])

    def test_gaussian(self):
        kernel = KernelSpec(KernelKind.SMOOTH_GAUSSIAN, 2.0)
        np.testing.assert_allclose(kernel.acceptance([0.0, 2.0]), [1.0, np.exp(-0.5)])

    def test_infinite_tolerance_accepts_everything(self):
        kernel = KernelSpec(KernelKind.SMOOTH_GAUSSIAN, np.inf)
        np.testing.assert_array_equal(kernel.acceptance([0.0, 1e9]), 1.0)

    def test_zero_tolerance_needs_exact_match(self):
        kernel = KernelSpec(KernelKind.SMOOTH_GAUSSIAN, 0.0)
        np.testing.assert_array_equal(kernel.acceptance([0.0, 0.5]), [1.0, 0.0])

    def test_negative_tolerance(self):
        with pytest.raises(ConfigurationError):
            KernelSpec(KernelKind.SHARP, -1.0)

    def test_unset_tolerance(self):
        with pytest.raises(ConfigurationError):
            KernelSpec().acceptance([1.0])


class TestStatistics:
    def test_shapes(self, tiny_panel):
        followups = [np.stack([obs.followup.edges] * 2) for obs in tiny_panel]
        assert summary_statistic(StatisticKind.FULL_PANEL, followups, tiny_panel).shape == (2, 12)
        assert summary_statistic(StatisticKind.EDGE_COUNTS, followups, tiny_panel).shape == (2, 2)
        crosstab = summary_statistic(StatisticKind.HOMOPHILY_CROSSTAB, followups, tiny_panel)
        assert crosstab.shape == (2, 2 * (1 + tiny_panel.n_covariates))

    def test_edge_counts(self, tiny_panel):
        followups = [obs.followup.edges[None] for obs in tiny_panel]
        np.testing.assert_array_equal(summary_statistic(StatisticKind.EDGE_COUNTS, followups, tiny_panel),
                                      [[4, 2]])


class TestAbcRun:
    def test_infinite_tolerance_returns_prior(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates, sd=1.0)
        result = abc_run(synthetic_panel, prior, kernel=KernelSpec(epsilon=np.inf), tau=4, n_draws=2000, seed=1)
        assert result.acceptance_rate == 1.0
        assert result.draws.shape == (2000, prior.dim)
        np.testing.assert_allclose(result.posterior_mean, 0.0, atol=4 / np.sqrt(2000))
        np.testing.assert_allclose(result.posterior_sd, 1.0, atol=0.08)

    def test_sharp_kernel_keeps_close_draws(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates, sd=1.0)
        result = abc_run(synthetic_panel, prior, kernel=KernelSpec(epsilon=6.0), tau=4, n_draws=400, seed=2)
        betas = prior.sample(400, make_generator(2, 0, 0))
        distances = simulated_distances(synthetic_panel, betas, 4, 2)
        assert result.draws.shape[0] == int((distances <= 6.0).sum())
        np.testing.assert_array_equal(result.draws, betas[distances <= 6.0])

    def test_same_seed_same_draws(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates)
        kwargs = dict(kernel=KernelSpec(epsilon=6.0), tau=4, n_draws=300, seed=9)
        a = abc_run(synthetic_panel, prior, **kwargs)
        b = abc_run(synthetic_panel, prior, **kwargs)
        np.testing.assert_array_equal(a.draws, b.draws)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_independent_of_worker_count(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates)
        betas = prior.sample(300, make_generator(4))
        serial = simulated_distances(synthetic_panel, betas, 4, 4, chunk_size=64)
        parallel = simulated_distances(synthetic_panel, betas, 4, 4, chunk_size=64, n_jobs=2)
        np.testing.assert_array_equal(serial, parallel)

    def test_no_acceptance_raises(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates)
        with pytest.raises(ToleranceError):
            abc_run(synthetic_panel, prior, kernel=KernelSpec(epsilon=0.0), tau=4, n_draws=20, seed=0)

    def test_importance_weights(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates, sd=2.0)
        proposal = ProposalSpec(mean=np.full(prior.dim, 0.5), sd=1.0)
        result = abc_run(synthetic_panel, prior, proposal, KernelSpec(epsilon=np.inf), tau=4, n_draws=200, seed=3)
        expected = np.exp(prior.log_pdf(result.draws) - proposal.resolve(prior).log_pdf(result.draws))
        np.testing.assert_allclose(result.weights, expected)

    def test_pilot_calibration(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates)
        result = abc_run(synthetic_panel, prior, tau=4, n_draws=500, n_pilot=500, target_rate=0.2, seed=5)
        assert 0 < result.epsilon < np.inf
        assert 0.05 < result.acceptance_rate < 0.6

    def test_pilot_uses_the_proposal(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates, sd=2.0)
        truth = [0.2, -0.5, 0.3, 0.0, -1.0, -0.8, 0.2, 0.5, 0.0, 0.0, 0.1, 0.0, 0.0]
        proposal = ProposalSpec(mean=np.array(truth), sd=0.05)
        result = abc_run(synthetic_panel, prior, proposal, tau=4, n_draws=2000, n_pilot=2000, target_rate=0.2,
                         seed=9)
        pilot = abc_pilot(synthetic_panel, prior, 4, 2000, 9, proposal=proposal)
        expected = float(np.mean(pilot <= result.epsilon))
        assert result.epsilon == choose_epsilon(pilot, 0.2)
        assert abs(result.acceptance_rate - expected) < 4 * np.sqrt(expected * (1 - expected) / 1000)
        assert result.acceptance_rate < 0.6

    def test_needs_tolerance_or_rate(self, synthetic_panel):
        with pytest.raises(ConfigurationError):
            abc_run(synthetic_panel, PriorSpec.default(synthetic_panel.n_covariates), tau=4, n_draws=10)

    def test_needs_rounds(self, synthetic_panel):
        with pytest.raises(ConfigurationError):
            abc_run(synthetic_panel, PriorSpec.default(synthetic_panel.n_covariates),
                    kernel=KernelSpec(epsilon=1.0), n_draws=10)

    def test_summary_tables(self, synthetic_panel):
        prior = PriorSpec.default(synthetic_panel.n_covariates)
        result = abc_run(synthetic_panel, prior, kernel=KernelSpec(epsilon=np.inf), tau=4, n_draws=50, seed=1)
        table = result.summary_table()
        assert [row[0] for row in table['rows']] == result.names
        assert result.draws_table()['headers'][-1] == 'weight'
        assert result.to_dict()['n_accepted'] == 50


def test_weighted_summary_matches_unweighted():
    draws = make_generator(0).normal(size=(1000, 2))
    summary = weighted_summary(draws, np.ones(1000))
    np.testing.assert_allclose(summary['mean'], draws.mean(axis=0))
    np.testing.assert_allclose(summary['sd'], draws.std(axis=0))
    np.testing.assert_allclose(summary['mc_se'], draws.std(axis=0) / np.sqrt(1000))
    assert summary['ess'] == pytest.approx(1000)


@pytest.mark.parametrize('weights', [np.zeros(4), np.array([1.0, np.nan, 1.0, 1.0]), np.array([1.0, np.inf, 0.0, 0.0])])
def test_weighted_summary_rejects_degenerate_weights(weights):
    draws = make_generator(0).normal(size=(4, 2))
    with pytest.raises(NumericalError):
        weighted_summary(draws, weights)
