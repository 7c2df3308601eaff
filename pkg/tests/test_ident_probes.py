import numpy as np
import pytest

from components.errors import ConfigurationError
from components.exact_chain import build_transition, matrix_power, stationary
from components.ident_probes import (GammaVector, ProbeDesign, gamma_from_model, gamma_to_pi, geometric_path,
                                     limit_probe_F, limit_probe_matching, limit_probe_rho, nonident_construct,
                                     probe_report, random_gamma, recover_gamma, two_state_limit)
from components.helpers import make_generator
from components.model import ParamVector
from tests.conftest import make_covariates, random_beta


def symmetric_gamma():
    return GammaVector(2, np.full((4, 2), 0.5), np.full((4, 2), 0.5))


class TestGammaToPi:
    def test_symmetric_gamma(self):
        Pi = gamma_to_pi(symmetric_gamma())
        np.testing.assert_allclose(np.diag(Pi), 0.5)
        np.testing.assert_allclose(Pi.sum(axis=0), 1.0)
        np.testing.assert_allclose(Pi.sum(axis=1), 1.0)

    def test_matches_model_transition(self):
        X = make_covariates(2, seed=3)
        beta = random_beta(1, seed=3)
        np.testing.assert_allclose(gamma_to_pi(gamma_from_model(X, beta)), build_transition(X, beta), atol=1e-14)

    def test_rejects_non_complementary_toggles(self):
        F = np.full((4, 2), 0.5)
        F[0, 0] = 0.6
        with pytest.raises(ConfigurationError):
            GammaVector(2, np.full((4, 2), 0.5), F)


class TestRecoverGamma:
    def test_symmetric_gamma_recovers_exactly(self):
        recovered = recover_gamma(gamma_to_pi(symmetric_gamma()))
        assert recovered.max_abs_diff(symmetric_gamma()) < 1e-12

    def test_round_trip_random_gammas(self):
        rng = make_generator(2024)
        worst = 0.0
        for _ in range(100):
            gamma = random_gamma(rng)
            worst = max(worst, recover_gamma(gamma_to_pi(gamma)).max_abs_diff(gamma))
        assert worst < 1e-8

    def test_model_gamma_round_trip(self):
        X = make_covariates(2, seed=11)
        beta = random_beta(1, seed=11)
        truth = gamma_from_model(X, beta)
        assert recover_gamma(build_transition(X, beta)).max_abs_diff(truth) < 1e-8

    def test_perturbed_meeting_changes_transition(self):
        base = random_gamma(make_generator(5))
        rho = base.rho.copy()
        rho[1] = [rho[1, 0] + 0.01, rho[1, 1] - 0.01]
        perturbed = GammaVector(2, rho, base.F)
        assert np.max(np.abs(gamma_to_pi(perturbed) - gamma_to_pi(base))) > 1e-4

    def test_only_two_agents(self):
        with pytest.raises(ConfigurationError):
            recover_gamma(np.eye(64), n_agents=3)


@pytest.fixture
def design():
    X = make_covariates(2, seed=21)
    return ProbeDesign.from_model(X, random_beta(1, seed=21))


class TestLimitProbes:
    @pytest.mark.parametrize('tau', [1, 2])
    def test_rho_probe_converges(self, design, tau):
        rows = limit_probe_rho(design, g=0, pair=0, tau=tau, instrument_path=geometric_path(5))
        assert [r.t for r in rows] == [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        assert rows[-1].gap < 1e-3
        assert rows[-1].target == pytest.approx(design.rho()[0, 0])

    def test_rho_probe_unit_instrument_at_twenty(self, design):
        assert limit_probe_rho(design, 1, 1, 1, [20.0])[0].gap < 1e-3

    @pytest.mark.parametrize('tau', [1, 2, 3])
    def test_f_probe_recovers_toggle(self, design, tau):
        rows = limit_probe_F(design, g=0, pair=1, tau=tau)
        assert rows[-1].gap < 1e-3
        assert rows[-1].complement_gap < 1e-6

    def test_f_probe_symmetric_case(self):
        X = make_covariates(2, seed=1)
        rows = limit_probe_F(ProbeDesign.from_model(X, ParamVector.zeros(1)), 0, 0, 2)
        assert rows[-1].estimate == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.parametrize('tau', [1, 2, 3])
    def test_matching_probe_reaches_toggle(self, design, tau):
        rows = limit_probe_matching(design, g=2, pair=0, tau=tau)
        assert rows[-1].gap < 1e-3

    def test_probe_arguments_checked(self, design):
        with pytest.raises(ConfigurationError):
            limit_probe_rho(design, g=4, pair=0, tau=1)
        with pytest.raises(ConfigurationError):
            limit_probe_rho(design, g=0, pair=0, tau=0)

    def test_report_columns(self, design):
        table = probe_report(limit_probe_rho(design, 0, 0, 1, [1.0, 2.0]))
        assert table['headers'] == ['t', 'estimate', 'target', 'gap', 'complement_gap']
        assert len(table['rows']) == 2


def test_two_state_limit_one_round():
    assert two_state_limit(0.3, 0.5, 0.4, 1) == pytest.approx(0.15)


class TestNonidentification:
    def test_target_law_is_stationary(self):
        pi0 = np.array([0.4, 0.3, 0.2, 0.1])
        Pi, pi = nonident_construct(pi0, np.array([0.3, 0.7]))
        np.testing.assert_allclose(pi, pi0, atol=1e-8)
        flows = pi0[:, None] * Pi
        assert np.max(np.abs(flows - flows.T)) < 1e-10

    def test_distinct_chains_share_uniform_law(self):
        pi0 = np.full(4, 0.25)
        Pi_a, pi_a = nonident_construct(pi0, np.array([0.5, 0.5]))
        Pi_b, pi_b = nonident_construct(pi0, np.array([0.9, 0.1]))
        np.testing.assert_allclose(pi_a, 0.25, atol=1e-10)
        np.testing.assert_allclose(pi_b, 0.25, atol=1e-10)
        assert np.max(np.abs(Pi_a - Pi_b)) > 0.01

    def test_link_dependent_meetings_rejected(self):
        rho = np.array([[0.5, 0.5], [0.2, 0.8], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ConfigurationError):
            nonident_construct(np.full(4, 0.25), rho)

    def test_stationary_by_power_iteration_matches(self):
        pi0 = np.array([0.1, 0.2, 0.3, 0.4])
        Pi, _ = nonident_construct(pi0, np.array([0.6, 0.4]))
        np.testing.assert_allclose(stationary(matrix_power(Pi, 2)), pi0, atol=1e-8)
