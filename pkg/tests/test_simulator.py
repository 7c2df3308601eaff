import numpy as np
import pytest

from components.exact_chain import build_transition, encode_state, matrix_power
from components.helpers import make_generator
from components.model import Network, ParamVector, ShockSpec, SimConfig
from components.errors import ConfigurationError
from components.simulator import SimulationCounters, simulate, simulate_batch, simulate_panel_followups, step
from tests.conftest import make_covariates, random_beta


def state_frequencies(final, n_states):
    rows, cols = np.nonzero(~np.eye(final.shape[1], dtype=bool))
    bits = final[:, rows, cols].astype(np.int64)
    codes = (bits << np.arange(bits.shape[1])).sum(axis=1)
    return np.bincount(codes, minlength=n_states) / final.shape[0]


class TestStep:
    def test_changes_at_most_one_edge(self):
        X = make_covariates(4, seed=1)
        beta = random_beta(1, seed=1)
        rng = make_generator(3)
        g = Network.empty(4)
        for _ in range(500):
            nxt = step(g, X, beta, ShockSpec(), rng)
            assert np.count_nonzero(nxt.edges != g.edges) <= 1
            g = nxt

    def test_huge_intercept_forms_every_met_link(self, covariates_n3):
        beta = ParamVector.zeros(2)
        beta.direct[0] = 1e6
        g = step(Network.empty(3), covariates_n3, beta, ShockSpec(), make_generator(0))
        assert g.n_edges() == 1

    def test_one_step_matches_transition_row(self):
        X = make_covariates(2, seed=4)
        beta = random_beta(1, seed=4)
        g0 = Network(np.array([[0, 1], [0, 0]]))
        n_sims = 200_000
        betas = np.repeat(beta.to_array()[None, :], n_sims, axis=0)
        final = simulate_batch(g0.edges, X, betas, 1, make_generator(9)).final
        freq = state_frequencies(final, 4)
        row = build_transition(X, beta)[encode_state(g0)]
        se = np.sqrt(row * (1 - row) / n_sims)
        assert np.all(np.abs(freq - row) <= 4 * se + 1e-12)


class TestSimulate:
    def test_zero_rounds_returns_start(self, covariates_n3):
        g0 = Network(np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0]]))
        result = simulate(g0, covariates_n3, random_beta(2), ShockSpec(), SimConfig(n_rounds=0, seed=1))
        assert result.final == g0

    def test_distance_bounded_by_rounds(self):
        X = make_covariates(5, seed=2)
        g0 = Network.empty(5)
        for rounds in (1, 3, 7):
            result = simulate(g0, X, random_beta(1, seed=rounds), ShockSpec(), SimConfig(n_rounds=rounds, seed=rounds))
            assert np.count_nonzero(result.final.edges != g0.edges) <= rounds

    def test_same_seed_same_trajectory(self, covariates_n3):
        cfg = SimConfig(n_rounds=25, seed=123, record_trajectory=True)
        beta = random_beta(2, seed=6)
        first = simulate(Network.empty(3), covariates_n3, beta, ShockSpec(), cfg)
        second = simulate(Network.empty(3), covariates_n3, beta, ShockSpec(), cfg)
        assert len(first.trajectory) == 26
        assert all(a == b for a, b in zip(first.trajectory, second.trajectory))

    def test_negative_rounds_rejected(self):
        with pytest.raises(ConfigurationError):
            SimConfig(n_rounds=-1)

    def test_two_rounds_match_squared_transition(self):
        X = make_covariates(2, seed=7)
        beta = random_beta(1, seed=7)
        n_sims = 200_000
        betas = np.repeat(beta.to_array()[None, :], n_sims, axis=0)
        final = simulate_batch(np.zeros((2, 2)), X, betas, 2, make_generator(17)).final
        freq = state_frequencies(final, 4)
        row = matrix_power(build_transition(X, beta), 2)[0]
        se = np.sqrt(row * (1 - row) / n_sims)
        assert np.all(np.abs(freq - row) <= 4 * se + 1e-12)


class TestSimulateBatch:
    def test_batch_rows_follow_their_own_coefficients(self, covariates_n3):
        forming = ParamVector.zeros(2)
        forming.direct[0] = 50.0
        severing = ParamVector.zeros(2)
        severing.direct[0] = -50.0
        betas = np.stack([forming.to_array(), severing.to_array()])
        final = simulate_batch(np.zeros((3, 3)), covariates_n3, betas, 10, make_generator(1)).final
        assert final[0].sum() >= 1
        assert final[1].sum() == 0

    def test_fixed_accept_and_uniform_meetings(self, covariates_n3):
        beta = random_beta(2, seed=3, scale=3.0)
        counters = SimulationCounters(6)
        betas = np.repeat(beta.to_array()[None, :], 5000, axis=0)
        simulate_batch(np.zeros((3, 3)), covariates_n3, betas, 4, make_generator(2),
                       uniform_meetings=True, fixed_accept=0.5, counters=counters)
        assert counters.decisions == 20_000
        assert counters.link_rate == pytest.approx(0.5, abs=0.02)
        shares = counters.pair_selections / counters.pair_selections.sum()
        np.testing.assert_allclose(shares, 1 / 6, atol=0.02)

    def test_wrong_coefficient_width(self, covariates_n3):
        with pytest.raises(ConfigurationError):
            simulate_batch(np.zeros((3, 3)), covariates_n3, np.zeros((2, 5)), 1, make_generator(0))


def test_panel_followups_use_per_network_streams(synthetic_panel):
    betas = np.zeros((3, ParamVector.dim(synthetic_panel.n_covariates)))
    first = simulate_panel_followups(synthetic_panel, betas, 3, seed=5)
    again = simulate_panel_followups(synthetic_panel, betas, 3, seed=5)
    subset = simulate_panel_followups(synthetic_panel, betas, 3, seed=5, networks=[2])
    assert len(first) == len(synthetic_panel)
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(subset[0], first[2])
