"""
Per-classroom summary statistics fitted by sparse regression.

Prior draws are simulated forward, and each coefficient is regressed on the
simulated follow-up edges of one classroom. The fitted affine map
approximates the posterior mean of the coefficient given that classroom's
network, which EP-ABC then compares between simulated and observed data.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import norm
from sklearn.linear_model import Lasso, LinearRegression
from sklearn.preprocessing import StandardScaler

from config import config
from components.errors import ConfigurationError
from components.helpers import make_generator, parallel_map
from components.logger import get_logger
from components.model import ShockSpec, off_diagonal_pairs
from components.panel import NetworkPanel
from components.priors import PriorSpec
from components.simulator import simulate_batch

logger = get_logger(__name__)

_SUMMARY_PHASE = 2
_DRAW_STREAM, _SIM_STREAM = 0, 1


@dataclass(eq=False)
class LocalSummary:
    """Affine map from a classroom's off-diagonal edges to one output per coefficient."""
    network_id: str
    intercept: np.ndarray  # (L,)
    slopes: np.ndarray  # (L, P)

    @property
    def n_outputs(self) -> int:
        return self.intercept.shape[0]

    def apply(self, networks: np.ndarray) -> np.ndarray:
        """(B, N, N) networks to (B, L) summaries."""
        networks = np.asarray(networks)
        rows, cols = off_diagonal_pairs(networks.shape[-1])
        edges = networks[:, rows, cols].astype(float)
        return self.intercept[None, :] + edges @ self.slopes.T

    def support(self) -> List[np.ndarray]:
        return [np.flatnonzero(row) for row in self.slopes]


def plugin_penalty(response: np.ndarray, n_features: int,
                   c: Optional[float] = None, gamma: Optional[float] = None) -> float:
    """
    Default Lasso penalty c * sigma * z(1 - gamma / 2p) / sqrt(n) on standardized features.

    sigma is the response standard deviation, a conservative stand-in for the noise level.
    """
    c = config.PLUGIN_PENALTY_C if c is None else c
    gamma = config.PLUGIN_PENALTY_GAMMA if gamma is None else gamma
    n = response.shape[0]
    sigma = float(np.std(response))
    return c * sigma * norm.ppf(1.0 - gamma / (2.0 * max(n_features, 1))) / np.sqrt(n)


def fit_summary_regressions(draws: np.ndarray, edges: np.ndarray,
                            penalty: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Post-Lasso regression of every draw column on the edge columns.

    Lasso on standardized edges selects a support; an unpenalized refit on
    the original scale gives the coefficients. Edge columns that never vary
    get zero slope.

    Args:
        draws: (R, L) responses
        edges: (R, P) binary regressors
        penalty: Lasso penalty; None applies the plug-in rule, inf keeps the intercept only

    Returns:
        intercept (L,) and slopes (L, P)
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    edges = np.asarray(edges, dtype=float)
    if draws.shape[0] != edges.shape[0]:
        raise ConfigurationError('draws and edges must have the same number of rows')
    n_out, n_feat = draws.shape[1], edges.shape[1]
    intercept = draws.mean(axis=0)
    slopes = np.zeros((n_out, n_feat))

    live = np.flatnonzero(edges.std(axis=0) > 0)
    if len(live) < n_feat:
        logger.info(f'{n_feat - len(live)} of {n_feat} edge columns are constant in the simulations; '
                    'their slopes are set to zero')
    if len(live) == 0 or (penalty is not None and np.isinf(penalty)):
        return intercept, slopes

    scaled = StandardScaler().fit_transform(edges[:, live])
    for out in range(n_out):
        y = draws[:, out]
        if np.ptp(y) == 0:
            continue
        alpha = plugin_penalty(y, len(live)) if penalty is None else penalty
        lasso = Lasso(alpha=alpha, fit_intercept=True, max_iter=10_000)
        lasso.fit(scaled, y)
        chosen = live[np.flatnonzero(lasso.coef_)]
        if len(chosen) == 0:
            continue
        refit = LinearRegression().fit(edges[:, chosen], y)
        intercept[out] = refit.intercept_
        slopes[out, chosen] = refit.coef_
    return intercept, slopes


def fit_local_summaries(panel: NetworkPanel,
                        prior: PriorSpec,
                        shocks: ShockSpec = ShockSpec(),
                        tau: Optional[int] = None,
                        n_draws: Optional[int] = None,
                        penalty: Optional[float] = None,
                        seed: int = 0,
                        halton: bool = False,
                        n_jobs: int = 1) -> List[LocalSummary]:
    """
    Fit one LocalSummary per classroom from prior predictive simulations.

    Args:
        panel: Panel whose baselines and covariates drive the simulations
        prior: Prior the coefficient draws come from
        shocks: Taste-shock family
        tau: Number of rounds (defaults to the prior's point mass)
        n_draws: Simulated draws per classroom
        penalty: Lasso penalty (None for the plug-in rule)
        seed: Run seed
        halton: Scrambled Halton prior draws
        n_jobs: joblib workers across classrooms

    Returns:
        One summary per classroom, in panel order
    """
    tau = prior.tau if tau is None else tau
    if tau is None:
        raise ConfigurationError('local summaries need a fixed number of rounds')
    n_draws = config.LOCAL_SUMMARY_DRAWS if n_draws is None else n_draws
    betas = prior.sample(n_draws, make_generator(seed, _SUMMARY_PHASE, _DRAW_STREAM), halton)

    def fit_one(c: int) -> LocalSummary:
        obs = panel[c]
        rows, cols = off_diagonal_pairs(obs.n_agents)
        if n_draws < 10 * len(rows):
            logger.warning(f'Network {obs.network_id}: {n_draws} draws for {len(rows)} edge regressors; '
                           'at least ten per regressor is advisable')
        rng = make_generator(seed, _SUMMARY_PHASE, _SIM_STREAM, c)
        sims = simulate_batch(obs.baseline.edges, obs.covariates, betas, tau, rng, shocks).final
        intercept, slopes = fit_summary_regressions(betas, sims[:, rows, cols], penalty)
        return LocalSummary(obs.network_id, intercept, slopes)

    summaries = parallel_map(fit_one, range(len(panel)), n_jobs)
    logger.info(f'Fitted local summaries for {len(summaries)} networks from {n_draws} draws')
    return summaries
