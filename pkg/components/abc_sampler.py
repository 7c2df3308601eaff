"""
Accept-reject approximate Bayesian computation over the whole panel.

Draws coefficient vectors from a proposal, simulates every classroom's
follow-up from its baseline, and keeps draws whose simulated panel lies
close to the observed one. Importance weights prior/proposal correct for a
proposal that is not the prior.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from components.errors import ConfigurationError, NumericalError, ToleranceError
from components.helpers import chunk_bounds, make_generator, parallel_map, weighted_quantiles
from components.logger import get_logger
from components.model import ParamVector, ShockSpec, off_diagonal_pairs
from components.panel import NetworkPanel
from components.priors import PriorSpec, ProposalSpec
from components.simulator import simulate_panel_followups

logger = get_logger(__name__)

# Stream coordinates of the random phases of a run
_MAIN, _PILOT = 0, 1
_DRAW_STREAM, _ACCEPT_STREAM = 0, 1
QUANTILE_LEVELS = (0.025, 0.5, 0.975)


class KernelKind(str, Enum):
    SHARP = 'sharp'
    SMOOTH_GAUSSIAN = 'smooth_gaussian'


class StatisticKind(str, Enum):
    FULL_PANEL = 'full_panel'
    EDGE_COUNTS = 'edge_counts'
    HOMOPHILY_CROSSTAB = 'homophily_crosstab'


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.SHARP
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.epsilon is not None and (np.isnan(self.epsilon) or self.epsilon < 0):
            raise ConfigurationError('epsilon must be nonnegative')

    def acceptance(self, distances: np.ndarray) -> np.ndarray:
        """Acceptance probability of each distance."""
        if self.epsilon is None:
            raise ConfigurationError('kernel tolerance has not been set')
        d = np.asarray(distances, dtype=float)
        if np.isinf(self.epsilon):
            return np.ones_like(d)
        if self.kind == KernelKind.SHARP:
            return (d <= self.epsilon).astype(float)
        if self.epsilon == 0:
            return (d == 0).astype(float)
        return np.exp(-0.5 * (d / self.epsilon) ** 2)


@dataclass
class AbcResult:
    draws: np.ndarray
    weights: np.ndarray
    n_draws: int
    acceptance_rate: float
    epsilon: float
    kernel: KernelKind
    statistic: StatisticKind
    names: List[str]
    posterior_mean: np.ndarray
    posterior_sd: np.ndarray
    posterior_quantiles: np.ndarray
    mc_standard_error: np.ndarray
    prob_negative: np.ndarray
    effective_sample_size: float
    seed: int

    @property
    def accepted_draws(self) -> List[Tuple[np.ndarray, float]]:
        return list(zip(self.draws, self.weights))

    def summary_table(self) -> Dict[str, list]:
        rows = []
        for idx, name in enumerate(self.names):
            rows.append([name, self.posterior_mean[idx], self.posterior_sd[idx],
                         self.posterior_quantiles[0, idx], self.posterior_quantiles[2, idx],
                         self.prob_negative[idx], self.mc_standard_error[idx]])
        return {'headers': ['coefficient', 'mean', 'sd', 'q2.5', 'q97.5', 'prob_negative', 'mc_se'], 'rows': rows}

    def draws_table(self) -> Dict[str, list]:
        return {'headers': list(self.names) + ['weight'],
                'rows': [list(draw) + [w] for draw, w in zip(self.draws, self.weights)]}

    def to_dict(self) -> Dict:
        return {
            'n_draws': self.n_draws,
            'n_accepted': int(self.draws.shape[0]),
            'acceptance_rate': self.acceptance_rate,
            'epsilon': self.epsilon,
            'kernel': self.kernel.value,
            'statistic': self.statistic.value,
            'effective_sample_size': self.effective_sample_size,
            'seed': self.seed,
            'posterior': {name: {'mean': self.posterior_mean[i], 'sd': self.posterior_sd[i],
                                 'q2.5': self.posterior_quantiles[0, i], 'median': self.posterior_quantiles[1, i],
                                 'q97.5': self.posterior_quantiles[2, i], 'prob_negative': self.prob_negative[i],
                                 'mc_se': self.mc_standard_error[i]}
                          for i, name in enumerate(self.names)},
        }


def summary_statistic(kind: StatisticKind, followups: Sequence[np.ndarray], panel: NetworkPanel) -> np.ndarray:
    """
    (B, d) summary of simulated (or observed) follow-ups, one array per network.

    FULL_PANEL stacks every off-diagonal edge; EDGE_COUNTS keeps one count per
    network; HOMOPHILY_CROSSTAB adds, per network and pair covariate, the
    covariate total over present links.
    """
    parts = []
    for obs, sims in zip(panel, followups):
        sims = np.asarray(sims, dtype=float)
        if kind == StatisticKind.FULL_PANEL:
            rows, cols = off_diagonal_pairs(obs.n_agents)
            parts.append(sims[:, rows, cols])
        elif kind == StatisticKind.EDGE_COUNTS:
            parts.append(sims.sum(axis=(1, 2))[:, None])
        elif kind == StatisticKind.HOMOPHILY_CROSSTAB:
            counts = sims.sum(axis=(1, 2))[:, None]
            weighted = np.einsum('bij,ijk->bk', sims, obs.covariates.pair_covariates)
            parts.append(np.hstack([counts, weighted]))
        else:
            raise ConfigurationError(f'unknown summary statistic {kind}')
    return np.hstack(parts) if parts else np.zeros((0, 0))


def _observed_statistic(kind: StatisticKind, panel: NetworkPanel) -> np.ndarray:
    return summary_statistic(kind, [obs.followup.edges[None] for obs in panel], panel)[0]


def _chunk_distances(panel: NetworkPanel, observed: np.ndarray, betas: np.ndarray, tau: int, seed: int,
                     stream: Tuple[int, ...], kind: StatisticKind, shocks: ShockSpec) -> np.ndarray:
    followups = simulate_panel_followups(panel, betas, tau, seed, stream, shocks)
    if kind == StatisticKind.FULL_PANEL:
        # Squared Euclidean distance on binary vectors is the mismatch count
        mismatches = np.zeros(betas.shape[0])
        for obs, sims in zip(panel, followups):
            mismatches += (sims != obs.followup.edges[None]).sum(axis=(1, 2))
        return np.sqrt(mismatches)
    stats = summary_statistic(kind, followups, panel)
    return np.sqrt(((stats - observed[None, :]) ** 2).sum(axis=1))


def simulated_distances(panel: NetworkPanel, betas: np.ndarray, tau: int, seed: int, phase: int = _MAIN,
                        statistic: StatisticKind = StatisticKind.FULL_PANEL, shocks: ShockSpec = ShockSpec(),
                        n_jobs: int = 1, chunk_size: Optional[int] = None) -> np.ndarray:
    """
    Distance between the observed panel and a simulated panel for each draw.

    Draws are processed in fixed-size chunks; chunk k of network c uses the
    stream (seed, c, phase, k), so results do not depend on n_jobs.
    """
    chunk_size = config.SIMULATION_CHUNK_SIZE if chunk_size is None else chunk_size
    observed = _observed_statistic(statistic, panel)
    chunks = chunk_bounds(betas.shape[0], chunk_size)
    parts = parallel_map(
        lambda item: _chunk_distances(panel, observed, betas[item[1].start:item[1].stop], tau, seed,
                                      (phase, item[0]), statistic, shocks),
        list(enumerate(chunks)), n_jobs)
    return np.concatenate(parts) if parts else np.zeros(0)


def choose_epsilon(pilot_distances: Sequence[float], target_rate: float) -> float:
    """
    Tolerance equal to the target_rate quantile of pilot distances.

    Uses the inverted empirical CDF, so a rate of 0.01 on 10,000 distinct
    distances picks the 100th smallest.
    """
    pilot = np.asarray(pilot_distances, dtype=float)
    if pilot.size == 0:
        raise ConfigurationError('pilot sample is empty')
    if not 0 < target_rate <= 1:
        raise ConfigurationError('target rate must lie in (0, 1]')
    return float(np.quantile(pilot, target_rate, method='inverted_cdf'))


def _resolve_tau(tau: Optional[int], prior: PriorSpec) -> int:
    tau = prior.tau if tau is None else tau
    if tau is None:
        raise ConfigurationError('the number of rounds must be given or fixed by the prior')
    return int(tau)


def abc_pilot(panel: NetworkPanel, prior: PriorSpec, tau: Optional[int] = None, n_pilot: Optional[int] = None,
              seed: int = 0, statistic: StatisticKind = StatisticKind.FULL_PANEL,
              shocks: ShockSpec = ShockSpec(), n_jobs: int = 1, halton: bool = False,
              proposal: ProposalSpec = ProposalSpec()) -> np.ndarray:
    """Distances of proposal draws, for calibrating the tolerance of a run with the same proposal."""
    tau = _resolve_tau(tau, prior)
    n_pilot = config.ABC_PILOT_DRAWS if n_pilot is None else n_pilot
    betas = proposal.resolve(prior).sample(n_pilot, make_generator(seed, _PILOT, _DRAW_STREAM), halton)
    return simulated_distances(panel, betas, tau, seed, _PILOT, statistic, shocks, n_jobs)


def weighted_summary(draws: np.ndarray, weights: np.ndarray) -> Dict[str, np.ndarray]:
    """Weighted mean, sd, quantiles, P(<0) and Monte Carlo standard error of the mean."""
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericalError(f'importance weights of the accepted draws sum to {total}')
    mean = (weights[:, None] * draws).sum(axis=0) / total
    var = (weights[:, None] * (draws - mean) ** 2).sum(axis=0) / total
    mc_se = np.sqrt((weights[:, None] ** 2 * (draws - mean) ** 2).sum(axis=0)) / total
    return {
        'mean': mean,
        'sd': np.sqrt(var),
        'quantiles': weighted_quantiles(draws, weights, QUANTILE_LEVELS),
        'prob_negative': (weights[:, None] * (draws < 0)).sum(axis=0) / total,
        'mc_se': mc_se,
        'ess': float(total ** 2 / (weights ** 2).sum()),
    }


def abc_run(panel: NetworkPanel,
            prior: PriorSpec,
            proposal: ProposalSpec = ProposalSpec(),
            kernel: KernelSpec = KernelSpec(),
            tau: Optional[int] = None,
            n_draws: Optional[int] = None,
            statistic: StatisticKind = StatisticKind.FULL_PANEL,
            seed: int = 0,
            halton: bool = False,
            target_rate: Optional[float] = None,
            n_pilot: Optional[int] = None,
            shocks: ShockSpec = ShockSpec(),
            n_jobs: int = 1) -> AbcResult:
    """
    Accept-reject ABC with importance weights and a sharp or Gaussian kernel.

    Args:
        panel: Observed panel
        prior: Gaussian prior (pinned coefficients stay fixed)
        proposal: Proposal density; the default is the prior
        kernel: Kernel; when its tolerance is unset, target_rate calibrates it on a pilot run
        tau: Number of rounds (defaults to the prior's point mass)
        n_draws: Number of proposal draws
        statistic: Summary statistic
        seed: Run seed
        halton: Use scrambled Halton draws for the proposal
        target_rate: Pilot acceptance target used when the kernel has no tolerance
        n_pilot: Pilot draws
        shocks: Taste-shock family
        n_jobs: joblib workers for the simulation chunks

    Returns:
        AbcResult

    Raises:
        ToleranceError: when no draw is accepted
    """
    tau = _resolve_tau(tau, prior)
    n_draws = config.ABC_DRAWS if n_draws is None else n_draws
    if prior.dim != ParamVector.dim(panel.n_covariates):
        raise ConfigurationError(f'prior has {prior.dim} coefficients, the panel needs '
                                 f'{ParamVector.dim(panel.n_covariates)}')
    if statistic != StatisticKind.FULL_PANEL:
        logger.warning(f'Summary statistic {statistic.value} is coarser than the full panel; '
                       'the ABC posterior no longer targets the exact posterior as the tolerance shrinks')

    if kernel.epsilon is None:
        if target_rate is None:
            raise ConfigurationError('either a kernel tolerance or a target acceptance rate is required')
        pilot = abc_pilot(panel, prior, tau, n_pilot, seed, statistic, shocks, n_jobs, halton, proposal)
        kernel = replace(kernel, epsilon=choose_epsilon(pilot, target_rate))
        logger.info(f'Tolerance {kernel.epsilon:.4g} targets acceptance rate {target_rate}')

    q = proposal.resolve(prior)
    betas = q.sample(n_draws, make_generator(seed, _MAIN, _DRAW_STREAM), halton)
    if proposal.is_prior:
        weights = np.ones(n_draws)
    else:
        weights = np.exp(prior.log_pdf(betas) - q.log_pdf(betas))

    distances = simulated_distances(panel, betas, tau, seed, _MAIN, statistic, shocks, n_jobs)
    if kernel.kind == KernelKind.SHARP or kernel.epsilon in (0.0, np.inf):
        accepted = kernel.acceptance(distances) > 0
    else:
        u = make_generator(seed, _MAIN, _ACCEPT_STREAM).random(n_draws)
        accepted = u < kernel.acceptance(distances)

    n_accepted = int(accepted.sum())
    if n_accepted == 0:
        raise ToleranceError(f'no draw accepted at tolerance {kernel.epsilon:.4g}; increase epsilon or draws')
    rate = n_accepted / n_draws
    logger.info(f'ABC accepted {n_accepted} of {n_draws} draws (rate {rate:.4f})')

    kept, kept_w = betas[accepted], weights[accepted]
    summary = weighted_summary(kept, kept_w)
    names = ParamVector.names(panel.covariate_names)
    return AbcResult(
        draws=kept,
        weights=kept_w,
        n_draws=n_draws,
        acceptance_rate=rate,
        epsilon=float(kernel.epsilon),
        kernel=kernel.kind,
        statistic=statistic,
        names=names,
        posterior_mean=summary['mean'],
        posterior_sd=summary['sd'],
        posterior_quantiles=summary['quantiles'],
        mc_standard_error=summary['mc_se'],
        prob_negative=summary['prob_negative'],
        effective_sample_size=summary['ess'],
        seed=seed,
    )
