import numpy as np
import pytest
from scipy.integrate import trapezoid

from components.errors import CapacityError, ConfigurationError
from components.exact_chain import build_transition, chain_primitives, decode_state, encode_state, matrix_power
from components.likelihood import exact_loglik, loglik_grid, panel_loglik, quadrature_posterior
from components.model import Network, ParamVector, ShockSpec
from components.panel import NetworkObservation, NetworkPanel
from tests.conftest import make_covariates, random_beta


class TestExactLoglik:
    def test_zero_rounds(self, covariates_n3):
        g = Network(np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0]]))
        assert exact_loglik(g, g, covariates_n3, random_beta(2), tau=0) == 0.0
        assert exact_loglik(g, Network.empty(3), covariates_n3, random_beta(2), tau=0) == -np.inf

    def test_one_round_neighbor(self):
        X = make_covariates(3, seed=2)
        beta = random_beta(1, seed=2)
        g0 = Network.empty(3)
        g1 = g0.with_edge(1, 2, 1)
        rho, flip, _ = chain_primitives(X, beta)
        pair = 3  # (1, 2)
        assert exact_loglik(g0, g1, X, beta, tau=1) == pytest.approx(np.log(rho[0, pair] * flip[0, pair]),
                                                                      abs=1e-12)

    @pytest.mark.parametrize('seed', range(4))
    def test_matches_matrix_power(self, seed):
        X = make_covariates(2, seed=seed)
        beta = random_beta(1, seed=seed)
        P3 = matrix_power(build_transition(X, beta), 3)
        for a in range(4):
            for b in range(4):
                value = exact_loglik(decode_state(a, 2), decode_state(b, 2), X, beta, tau=3)
                assert value == pytest.approx(np.log(P3[a, b]), abs=1e-10)

    def test_unreachable_target(self, covariates_n3):
        full = Network(np.ones((3, 3), dtype=int) - np.eye(3, dtype=int))
        assert exact_loglik(Network.empty(3), full, covariates_n3, random_beta(2), tau=5) == -np.inf

    def test_total_probability(self):
        X = make_covariates(2, seed=8)
        beta = random_beta(1, seed=8)
        g0 = decode_state(1, 2)
        total = sum(np.exp(exact_loglik(g0, decode_state(b, 2), X, beta, tau=4)) for b in range(4))
        assert total == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize('seed', range(10))
    def test_pruning_is_sound(self, seed):
        rng = np.random.default_rng(seed)
        X = make_covariates(2, seed=seed)
        beta = random_beta(1, seed=seed)
        tau = int(rng.integers(1, 5))
        a, b = rng.integers(0, 4, size=2)
        pruned = exact_loglik(decode_state(a, 2), decode_state(b, 2), X, beta, tau=tau)
        full = exact_loglik(decode_state(a, 2), decode_state(b, 2), X, beta, tau=tau, prune=False)
        assert pruned == pytest.approx(full, abs=1e-12)

    def test_node_budget(self):
        X = make_covariates(4, seed=1)
        with pytest.raises(CapacityError):
            exact_loglik(Network.empty(4), Network.empty(4), X, random_beta(1), tau=8, node_budget=50)

    def test_negative_rounds(self, covariates_n2):
        with pytest.raises(ConfigurationError):
            exact_loglik(Network.empty(2), Network.empty(2), covariates_n2, ParamVector.zeros(1), tau=-1)


class TestPanelLoglik:
    def test_single_network_panel(self):
        X = make_covariates(3, seed=4)
        beta = random_beta(1, seed=4)
        g0, g1 = Network.empty(3), Network.empty(3).with_edge(0, 1, 1)
        panel = NetworkPanel([NetworkObservation('a', g0, g1, X)])
        assert panel_loglik(panel, beta, tau=3) == pytest.approx(exact_loglik(g0, g1, X, beta, tau=3))

    def test_duplicated_network_doubles(self):
        X = make_covariates(3, seed=5)
        beta = random_beta(1, seed=5)
        g0, g1 = Network.empty(3), Network.empty(3).with_edge(2, 1, 1)
        single = NetworkPanel([NetworkObservation('a', g0, g1, X)])
        double = NetworkPanel([NetworkObservation('a', g0, g1, X), NetworkObservation('b', g0, g1, X)])
        assert panel_loglik(double, beta, tau=2) == pytest.approx(2 * panel_loglik(single, beta, tau=2))

    def test_capacity_error_names_network(self):
        X = make_covariates(4, seed=1)
        panel = NetworkPanel([NetworkObservation('big', Network.empty(4), Network.empty(4), X)])
        with pytest.raises(CapacityError, match='big'):
            panel_loglik(panel, random_beta(1), tau=8, node_budget=50)


class TestGrid:
    def test_grid_peaks_near_generating_value(self, tiny_panel):
        beta = ParamVector.zeros(tiny_panel.n_covariates)
        index = ParamVector.names(tiny_panel.covariate_names).index('direct:intercept')
        values = np.linspace(-4, 4, 17)
        curve = loglik_grid(tiny_panel, beta, index, values, tau=2)
        assert curve.shape == (17,)
        assert np.all(np.isfinite(curve))
        # Both classrooms only gained links, so forming links must be favoured
        assert values[np.argmax(curve)] > 0

    def test_quadrature_posterior_normalized(self, tiny_panel):
        beta = ParamVector.zeros(tiny_panel.n_covariates)
        index = ParamVector.names(tiny_panel.covariate_names).index('direct:intercept')
        post = quadrature_posterior(tiny_panel, beta, index, np.linspace(-6, 6, 61), tau=2)
        assert trapezoid(post.density, post.grid) == pytest.approx(1.0)
        assert post.mean > 0
        assert post.sd > 0


def test_encode_matches_chain_codes():
    from components.likelihood import WalkSum
    X = make_covariates(3, seed=0)
    g = Network(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]]))
    walker = WalkSum(X, random_beta(1), g)
    assert walker.encode(g) == encode_state(g)


def test_rejects_shock_family_without_logistic_difference(covariates_n2):
    g = Network(np.zeros((2, 2)))
    with pytest.raises(ConfigurationError, match='unsupported shock family'):
        exact_loglik(g, g, covariates_n2, random_beta(), ShockSpec(family='probit'), tau=1)
