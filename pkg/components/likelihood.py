"""
Exact conditional likelihood of follow-up networks.

The probability of reaching g1 from g0 in tau rounds is a sum over walks.
A memoized depth-first recursion over (state, rounds remaining) turns the
walk sum into a dynamic program, and branches that are too far from g1 to
reach it in the remaining rounds are cut.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import log_expit, log_softmax, logsumexp
from scipy.stats import norm

from config import config
from components.errors import CapacityError, ConfigurationError
from components.helpers import parallel_map
from components.logger import get_logger
from components.model import (CovariateSet, Network, ParamVector, ShockSpec, accept_prob, coefficient_maps,
                              marginal_gains_batch, meeting_logits_batch, off_diagonal_pairs)
from components.panel import NetworkPanel

logger = get_logger(__name__)


class WalkSum:
    """Memoized log-probability of reaching a target network from any state."""

    def __init__(self, X: CovariateSet, beta: ParamVector, target: Network,
                 shocks: ShockSpec = ShockSpec(), node_budget: Optional[int] = None, prune: bool = True):
        beta.check_covariates(X)
        if target.n_agents != X.n_agents:
            raise ConfigurationError('target network and covariates disagree on the number of agents')
        self.X = X
        self.beta_arr = beta.to_array()[None, :]
        self.maps = coefficient_maps(X, beta)
        # the walk sum uses log_expit, so only families with a logistic difference are accepted
        accept_prob(0.0, shocks)
        self.rows, self.cols = off_diagonal_pairs(X.n_agents)
        self.n_pairs = len(self.rows)
        self.target = self.encode(target)
        self.node_budget = config.NODE_BUDGET if node_budget is None else node_budget
        self.prune = prune
        self.cache: Dict[Tuple[int, int], float] = {}
        self.moves: Dict[int, Tuple[List[int], np.ndarray]] = {}

    def encode(self, g: Network) -> int:
        code = 0
        for p, bit in enumerate(g.vector()):
            if bit:
                code |= 1 << p
        return code

    def _adjacency(self, code: int) -> np.ndarray:
        G = np.zeros((self.X.n_agents, self.X.n_agents))
        bits = [(code >> p) & 1 for p in range(self.n_pairs)]
        G[self.rows, self.cols] = bits
        return G

    def distance(self, code: int) -> int:
        return bin(code ^ self.target).count('1')

    def _moves(self, code: int) -> Tuple[List[int], np.ndarray]:
        """Successor codes and one-round log-probabilities, the last entry being the stay."""
        if code in self.moves:
            return self.moves[code]
        G = self._adjacency(code)
        log_rho = log_softmax(meeting_logits_batch(G[None], self.X, self.beta_arr)[0][self.rows, self.cols])
        marginal = marginal_gains_batch(G[None], *self.maps)[0][self.rows, self.cols]
        linked = G[self.rows, self.cols].astype(bool)
        toggle_gain = np.where(linked, -marginal, marginal)
        log_toggle = log_rho + log_expit(toggle_gain)
        log_stay = logsumexp(log_rho + log_expit(-toggle_gain))
        successors = [code ^ (1 << p) for p in range(self.n_pairs)] + [code]
        entry = (successors, np.append(log_toggle, log_stay))
        self.moves[code] = entry
        return entry

    def log_prob(self, code: int, remaining: int) -> float:
        if remaining == 0:
            return 0.0 if code == self.target else -np.inf
        if self.prune and self.distance(code) > remaining:
            return -np.inf
        key = (code, remaining)
        if key in self.cache:
            return self.cache[key]
        if len(self.cache) >= self.node_budget:
            raise CapacityError(
                f'walk enumeration exceeded the node budget of {self.node_budget} cache entries; '
                'use ABC or EP-ABC for this configuration')
        successors, log_step = self._moves(code)
        terms = [lp + self.log_prob(nxt, remaining - 1) for nxt, lp in zip(successors, log_step)]
        finite = [t for t in terms if t > -np.inf]
        value = float(logsumexp(finite)) if finite else -np.inf
        self.cache[key] = value
        return value


def exact_loglik(g0: Network, g1: Network, X: CovariateSet, beta: ParamVector,
                 shocks: ShockSpec = ShockSpec(), tau: int = 1,
                 node_budget: Optional[int] = None, prune: bool = True) -> float:
    """
    ln (Pi^tau)_{g0, g1} by pruned walk enumeration.

    Args:
        g0, g1: Baseline and follow-up networks
        X: Covariates
        beta: Coefficients
        shocks: Taste-shock family
        tau: Number of rounds
        node_budget: Maximum memoized (state, rounds) entries
        prune: Cut branches that cannot reach g1 in time

    Returns:
        Log-probability, -inf when g1 is unreachable

    Raises:
        CapacityError: when the memo outgrows the node budget
    """
    if tau < 0:
        raise ConfigurationError('tau must be nonnegative')
    if g0.n_agents != g1.n_agents:
        raise ConfigurationError('baseline and follow-up disagree on the number of agents')
    walker = WalkSum(X, beta, g1, shocks, node_budget, prune)
    return walker.log_prob(walker.encode(g0), int(tau))


def panel_loglik(panel: NetworkPanel, beta: ParamVector, shocks: ShockSpec = ShockSpec(), tau: int = 1,
                 node_budget: Optional[int] = None, n_jobs: int = 1) -> float:
    """Sum of exact log-likelihoods over independent networks."""
    def one(obs):
        try:
            return exact_loglik(obs.baseline, obs.followup, obs.covariates, beta, shocks, tau, node_budget)
        except CapacityError as e:
            raise CapacityError(f'network {obs.network_id}: {e}') from e

    return float(sum(parallel_map(one, list(panel), n_jobs)))


def loglik_grid(panel: NetworkPanel, beta: ParamVector, index: int, values: Sequence[float],
                shocks: ShockSpec = ShockSpec(), tau: int = 1, node_budget: Optional[int] = None) -> np.ndarray:
    """Panel log-likelihood as one coefficient moves along a grid, others held at beta."""
    base = beta.to_array()
    out = np.empty(len(values))
    for pos, value in enumerate(values):
        coefs = base.copy()
        coefs[index] = value
        out[pos] = panel_loglik(panel, ParamVector.from_array(coefs, beta.n_covariates), shocks, tau, node_budget)
    return out


@dataclass
class QuadraturePosterior:
    grid: np.ndarray
    density: np.ndarray
    mean: float
    sd: float


def quadrature_posterior(panel: NetworkPanel, beta: ParamVector, index: int, grid: Sequence[float],
                         prior_mean: float = 0.0, prior_sd: Optional[float] = None,
                         shocks: ShockSpec = ShockSpec(), tau: int = 1) -> QuadraturePosterior:
    """
    Posterior of one coefficient by quadrature on a grid, the others fixed at beta.

    The prior is Gaussian; the likelihood is exact.
    """
    prior_sd = config.PRIOR_SD if prior_sd is None else prior_sd
    grid = np.asarray(grid, dtype=float)
    log_post = loglik_grid(panel, beta, index, grid, shocks, tau) + norm.logpdf(grid, prior_mean, prior_sd)
    density = np.exp(log_post - np.max(log_post))
    density /= trapezoid(density, grid)
    mean = trapezoid(grid * density, grid)
    var = trapezoid((grid - mean) ** 2 * density, grid)
    return QuadraturePosterior(grid=grid, density=density, mean=float(mean), sd=float(np.sqrt(var)))
