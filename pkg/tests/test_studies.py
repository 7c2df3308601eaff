"""Seeded simulation studies against the exact quadrature posterior (run with -m slow)."""
import numpy as np
import pytest

from components.abc_sampler import KernelSpec, abc_run
from components.ep_abc import ep_run
from components.likelihood import quadrature_posterior
from components.model import ParamVector
from components.panel import NetworkPanel
from components.priors import PriorSpec
from components.synthetic import GeneratorSpec, synthesize_panel
from components.tau_estimator import estimate_tau

pytestmark = pytest.mark.slow

TRUE_BETA = [0.5, 0.3, 0.0, -1.0, -0.5, 0.4, 0.0, 0.0, 0.0]
INTERCEPT = ParamVector.names(['gender']).index('direct:intercept')
PRIOR_SD = 2.0
GRID = np.linspace(-6.0, 6.0, 241)


def two_agent_panel(n_classrooms, seed):
    spec = GeneratorSpec(n_classrooms=n_classrooms, n_agents=(2, 2), tau=1, baseline='bernoulli', baseline_p=0.5,
                         attributes={'gender': {'kind': 'bernoulli', 'p': 0.5}}, beta=TRUE_BETA)
    return synthesize_panel(spec, seed=seed)


def intercept_only_prior():
    """Every coefficient but the direct intercept pinned at its true value."""
    prior = PriorSpec(np.array(TRUE_BETA), PRIOR_SD, tau=1)
    prior.mean[INTERCEPT] = 0.0
    return prior.pin({i: v for i, v in enumerate(TRUE_BETA) if i != INTERCEPT})


def oracle(panel):
    return quadrature_posterior(panel, ParamVector.from_array(np.array(TRUE_BETA), 1), INTERCEPT, GRID,
                                prior_mean=0.0, prior_sd=PRIOR_SD, tau=1)


def test_abc_matches_quadrature_posterior():
    panel = two_agent_panel(200, seed=11)
    exact = oracle(panel)
    prior = intercept_only_prior()

    errors = []
    for target_rate in (1.0, 0.1, 0.01):
        kernel = KernelSpec(epsilon=np.inf) if target_rate == 1.0 else KernelSpec()
        result = abc_run(panel, prior, kernel=kernel, n_draws=50_000, target_rate=target_rate,
                         n_pilot=5_000, seed=21)
        errors.append(abs(result.posterior_mean[INTERCEPT] - exact.mean))

    # the sharpest kernel still carries tolerance bias on a 200-network panel
    assert errors[-1] <= 3 * result.mc_standard_error[INTERCEPT] + 0.25 * exact.sd
    assert errors[-1] < errors[0]


def test_ep_single_site_matches_quadrature_posterior():
    panel = NetworkPanel([two_agent_panel(1, seed=4)[0]])
    exact = oracle(panel)
    state, posterior = ep_run(panel, intercept_only_prior(), tau=1, draws_per_site=100_000,
                              target_accept=0.05, seed=8)
    n_accepted = state.history[-1].n_accepted
    assert posterior.mean[INTERCEPT] == pytest.approx(exact.mean, abs=3 * exact.sd / np.sqrt(n_accepted))
    assert posterior.sd[INTERCEPT] == pytest.approx(exact.sd, rel=0.1)


def test_tau_estimate_recovers_rounds():
    spec = GeneratorSpec(n_classrooms=500, n_agents=(4, 4), tau=5,
                         beta=[0.2, 0.5, 0.0, 0.0, 0.0, -0.3, 0.0, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0])
    hits = [estimate_tau(synthesize_panel(spec, seed=rep)).tau_hat == 5 for rep in range(20)]
    assert np.mean(hits) >= 0.9
