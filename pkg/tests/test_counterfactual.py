import numpy as np
import pytest

from components.counterfactual import (Scenario, ScenarioKind, WelfareTrajectory, apply_tracking, run_scenario,
                                       scenario_projection_summary, welfare_difference, welfare_normalizer)
from components.errors import ConfigurationError
from components.logger import LogCapture
from components.model import CovariateSet, Network, ParamVector
from components.panel import NetworkObservation, NetworkPanel
from tests.conftest import random_beta


def direct_only(n_covariates, intercept=1.0):
    beta = ParamVector.zeros(n_covariates)
    beta.direct[0] = intercept
    return beta


class TestTracking:
    def test_reassigns_by_skill_and_keeps_sizes(self, tiny_panel):
        tracked = apply_tracking(tiny_panel, 'cognitive_skills')
        assert tracked.network_ids == ['c1', 'c2']
        assert [obs.n_agents for obs in tracked] == [3, 3]
        skills = [obs.covariates.agents['cognitive_skills'].tolist() for obs in tracked]
        assert skills == [[-0.7, -0.2, 0.0], [0.3, 0.5, 1.1]]

    def test_keeps_only_links_between_former_classmates(self, tiny_panel):
        tracked = apply_tracking(tiny_panel, 'cognitive_skills')
        np.testing.assert_array_equal(tracked[0].baseline.edges, np.zeros((3, 3)))
        np.testing.assert_array_equal(tracked[1].baseline.edges, [[0, 0, 0], [0, 0, 0], [0, 1, 0]])
        np.testing.assert_array_equal(tracked[1].followup.edges, [[0, 0, 0], [0, 0, 1], [0, 1, 0]])

    def test_covariates_recomputed(self, tiny_panel):
        tracked = apply_tracking(tiny_panel, 'cognitive_skills')
        W = tracked[0].covariates.pair_covariates
        skill = tracked.covariate_names.index('cognitive_skills')
        assert W[0, 2, skill] == pytest.approx(0.7)

    def test_unknown_key(self, tiny_panel):
        with pytest.raises(ConfigurationError):
            apply_tracking(tiny_panel, 'height')

    def test_needs_agent_tables(self):
        X = CovariateSet(np.zeros((2, 2, 1)), np.zeros((2, 2)))
        panel = NetworkPanel([NetworkObservation('a', Network.empty(2), Network.empty(2), X)])
        with pytest.raises(ConfigurationError):
            apply_tracking(panel, 'cognitive_skills')


class TestRunScenario:
    def test_welfare_at_baseline(self, tiny_panel):
        beta = direct_only(tiny_panel.n_covariates)
        result = run_scenario(tiny_panel, [beta], Scenario(), tau=0)
        assert result.welfare.n_rounds == 0
        # Three baseline links, each worth the direct intercept
        assert result.welfare.component('direct')[0, 0] == pytest.approx(3.0)
        assert result.welfare.component('mutual')[0, 0] == 0.0

    def test_common_random_numbers_reproduce(self, tiny_panel):
        draws = np.stack([random_beta(2, seed=s).to_array() for s in range(4)])
        a = run_scenario(tiny_panel, draws, Scenario(), tau=6, replicates=5, seed=3)
        b = run_scenario(tiny_panel, draws, Scenario(), tau=6, replicates=5, seed=3)
        np.testing.assert_array_equal(a.welfare.values, b.welfare.values)
        diff = welfare_difference(a.welfare, b.welfare, 1.0)
        assert np.all(diff.values == 0)

    def test_salted_streams_without_common_random_numbers(self, tiny_panel):
        draws = np.stack([random_beta(2, seed=s).to_array() for s in range(20)])
        crn = run_scenario(tiny_panel, draws, Scenario(), tau=6, seed=3)
        salted = run_scenario(tiny_panel, draws, Scenario(), tau=6, seed=3, common_random_numbers=False)
        assert not np.array_equal(crn.welfare.values, salted.welfare.values)

    def test_random_friendship_links_half_the_time(self, tiny_panel):
        draws = np.repeat(random_beta(2, seed=1, scale=3.0).to_array()[None, :], 2000, axis=0)
        result = run_scenario(tiny_panel, draws, Scenario(ScenarioKind.RANDOM_FRIENDSHIP), tau=5, seed=2)
        assert result.decisions == 2 * 2000 * 5
        assert result.linked / result.decisions == pytest.approx(0.5, abs=0.02)

    def test_random_matching_selects_pairs_uniformly(self, tiny_panel):
        draws = np.repeat(random_beta(2, seed=2, scale=3.0).to_array()[None, :], 3000, axis=0)
        result = run_scenario(tiny_panel, draws, Scenario(ScenarioKind.RANDOM_MATCHING), tau=2, seed=4)
        for tally in result.counters:
            shares = tally.pair_selections / tally.pair_selections.sum()
            np.testing.assert_allclose(shares, 1 / 6, atol=0.02)

    def test_tracking_scenario_uses_reassigned_panel(self, tiny_panel):
        result = run_scenario(tiny_panel, [direct_only(2)], Scenario(ScenarioKind.TRACKING), tau=0)
        # Only one baseline link survives reassignment
        assert result.welfare.component('direct')[0, 0] == pytest.approx(1.0)

    def test_wrong_width(self, tiny_panel):
        with pytest.raises(ConfigurationError):
            run_scenario(tiny_panel, np.zeros((2, 4)), Scenario(), tau=1)

    def test_welfare_table(self, tiny_panel):
        result = run_scenario(tiny_panel, [direct_only(2)], Scenario(), tau=3, replicates=10, seed=1)
        table = result.welfare.summary_table()
        assert table['headers'] == ['round', 'component', 'mean', 'lo', 'hi']
        assert len(table['rows']) == 4 * 4

    def test_projection_summary(self, tiny_panel):
        draws = np.stack([random_beta(2, seed=s).to_array() for s in range(3)])
        result = run_scenario(tiny_panel, draws, Scenario(), tau=4, seed=5)
        projection = scenario_projection_summary(result.followups, result.panel)
        assert projection.names == ['intercept', 'gender', 'cognitive_skills']
        assert projection.coefficients.shape == (3, 3)
        assert np.all((projection.edge_mean >= 0) & (projection.edge_mean <= 1))
        assert [row[0] for row in projection.summary_table()['rows']][-2:] == ['edge_mean', 'edge_sd']


class TestWelfareDifference:
    def test_normalizer(self):
        assert welfare_normalizer(10, -0.5) == 5.0

    def test_positive_coefficient_flips_sign_and_warns(self):
        with LogCapture() as buffer:
            assert welfare_normalizer(10, 0.5) == -5.0
        assert 'change sign' in buffer.getvalue()
        with LogCapture() as buffer:
            welfare_normalizer(10, -0.5)
        assert buffer.getvalue() == ''

    def test_difference_is_scaled(self):
        base = WelfareTrajectory(np.ones((2, 3, 3)))
        alt = WelfareTrajectory(np.full((2, 3, 3), 3.0))
        diff = welfare_difference(base, alt, 4.0)
        np.testing.assert_allclose(diff.values, 0.5)
        np.testing.assert_allclose(diff.total, 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            welfare_difference(WelfareTrajectory(np.ones((2, 3, 3))), WelfareTrajectory(np.ones((3, 3, 3))), 1.0)

    def test_zero_normalizer(self):
        trajectory = WelfareTrajectory(np.ones((1, 1, 3)))
        with pytest.raises(ConfigurationError):
            welfare_difference(trajectory, trajectory, 0.0)
