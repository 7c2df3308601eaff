"""
Expectation-propagation ABC.

The posterior is approximated by the Gaussian prior times one Gaussian site
per classroom. Sites are revisited one at a time: the cavity (everything
but site c) proposes coefficient draws, classroom c alone is simulated, the
draws that reproduce its follow-up closely are kept, and site c is reset so
that the full approximation matches their first two moments.

Sites are stored in natural parameters (precision, precision times mean)
over the free coefficients of the prior. A site may be improper; only the
cavity and the full approximation must have positive-definite precision.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from config import config
from components.errors import ConfigurationError, EstimationError, NumericalError
from components.helpers import chunk_bounds, make_generator, parallel_map
from components.logger import get_logger
from components.model import ParamVector, ShockSpec, off_diagonal_pairs
from components.panel import NetworkPanel
from components.priors import PriorSpec, gaussian_draws
from components.simulator import simulate_batch

logger = get_logger(__name__)

_DRAW_STREAM, _SIM_STREAM = 0, 1
QUANTILE_LEVELS = (0.025, 0.5, 0.975)

# Maps simulated follow-ups (B, N, N) of one classroom to (B, L) features
SiteStatistic = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class GaussianSite:
    precision: np.ndarray
    shift: np.ndarray

    @classmethod
    def vacuous(cls, dim: int) -> 'GaussianSite':
        return cls(np.zeros((dim, dim)), np.zeros(dim))

    @property
    def is_proper(self) -> bool:
        try:
            np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError:
            return False
        return True

    @property
    def cov(self) -> np.ndarray:
        if not self.is_proper:
            raise NumericalError('site precision is not positive definite; it has no covariance')
        return np.linalg.inv(self.precision)

    @property
    def mean(self) -> np.ndarray:
        return self.cov @ self.shift

    def change_from(self, other: 'GaussianSite') -> float:
        return float(max(np.max(np.abs(self.precision - other.precision), initial=0.0),
                         np.max(np.abs(self.shift - other.shift), initial=0.0)))


@dataclass
class SiteRecord:
    pass_index: int
    network_id: str
    status: str  # 'updated' or 'skipped'
    n_accepted: int
    threshold: float
    change: float


@dataclass(eq=False)
class EpState:
    prior: PriorSpec
    prior_site: GaussianSite
    sites: List[GaussianSite]
    total_precision: np.ndarray
    total_shift: np.ndarray
    pass_count: int = 0
    convergence: List[float] = field(default_factory=list)
    history: List[SiteRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, prior: PriorSpec, n_sites: int) -> 'EpState':
        precision = np.linalg.inv(prior.free_cov())
        prior_site = GaussianSite(precision, precision @ prior.free_mean())
        d = prior.n_free
        return cls(
            prior=prior,
            prior_site=prior_site,
            sites=[GaussianSite.vacuous(d) for _ in range(n_sites)],
            total_precision=prior_site.precision.copy(),
            total_shift=prior_site.shift.copy(),
        )

    @property
    def dim(self) -> int:
        return self.prior.n_free

    def cavity(self, c: int) -> GaussianSite:
        site = self.sites[c]
        return GaussianSite(self.total_precision - site.precision, self.total_shift - site.shift)

    def replace_site(self, c: int, site: GaussianSite) -> None:
        old = self.sites[c]
        self.total_precision = self.total_precision - old.precision + site.precision
        self.total_shift = self.total_shift - old.shift + site.shift
        self.sites[c] = site

    def precision_identity_residual(self) -> float:
        """Distance between the tracked total and prior plus the sum of sites."""
        summed = self.prior_site.precision + sum((s.precision for s in self.sites), np.zeros((self.dim, self.dim)))
        shifted = self.prior_site.shift + sum((s.shift for s in self.sites), np.zeros(self.dim))
        return float(max(np.max(np.abs(self.total_precision - summed), initial=0.0),
                         np.max(np.abs(self.total_shift - shifted), initial=0.0)))

    def approximation(self) -> GaussianSite:
        return GaussianSite(self.total_precision, self.total_shift)


@dataclass
class EpPosterior:
    names: List[str]
    mean: np.ndarray
    cov: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray
    prob_negative: np.ndarray

    def summary_table(self) -> Dict[str, list]:
        rows = [[name, self.mean[i], self.quantiles[0, i], self.quantiles[2, i], self.prob_negative[i]]
                for i, name in enumerate(self.names)]
        return {'headers': ['coefficient', 'mean', 'q2.5', 'q97.5', 'prob_negative'], 'rows': rows}

    def to_dict(self) -> Dict:
        return {'names': self.names, 'mean': self.mean, 'cov': self.cov, 'sd': self.sd,
                'quantiles': {f'{q}': self.quantiles[k] for k, q in enumerate(QUANTILE_LEVELS)},
                'prob_negative': self.prob_negative}


def regularize(matrix: np.ndarray, label: str, scale: Optional[float] = None, max_tries: int = 40) -> np.ndarray:
    """
    Symmetrize a precision or covariance matrix and add jitter until it is positive definite.

    Jitter starts at scale * trace / dim and grows tenfold per try.
    """
    matrix = 0.5 * (matrix + matrix.T)
    dim = matrix.shape[0]
    try:
        np.linalg.cholesky(matrix)
        return matrix
    except np.linalg.LinAlgError:
        pass
    scale = config.EP_JITTER if scale is None else scale
    jitter = scale * max(abs(np.trace(matrix)) / dim, 1.0)
    for _ in range(max_tries):
        candidate = matrix + jitter * np.eye(dim)
        try:
            np.linalg.cholesky(candidate)
            logger.warning(f'{label} not positive definite; added jitter {jitter:.3e}')
            return candidate
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(f'{label} could not be made positive definite')


def hamming_distances(sims: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Number of mismatched edges between each simulated network and the observed one."""
    return (sims != observed[None]).sum(axis=(1, 2)).astype(float)


def _site_distances(sims: np.ndarray, observed: np.ndarray, statistic: Optional[SiteStatistic]) -> np.ndarray:
    if statistic is None:
        return hamming_distances(sims, observed)
    target = statistic(observed[None])[0]
    return np.sqrt(((statistic(sims) - target[None, :]) ** 2).sum(axis=1))


def ep_update_site(state: EpState,
                   c: int,
                   panel: NetworkPanel,
                   shocks: ShockSpec = ShockSpec(),
                   tau: int = 1,
                   draws_per_site: Optional[int] = None,
                   target_accept: Optional[float] = None,
                   seed: int = 0,
                   halton: bool = False,
                   min_accepted: Optional[int] = None,
                   statistic: Optional[SiteStatistic] = None,
                   n_jobs: int = 1) -> EpState:
    """
    Refit site c by ABC moment matching against classroom c.

    Args:
        state: Current approximation, updated in place
        c: Index of the classroom in the panel
        panel: Observed panel
        shocks: Taste-shock family
        tau: Number of rounds
        draws_per_site: Cavity draws
        target_accept: Fraction of draws kept; the mismatch threshold adapts to it
        seed: Run seed; the site uses the streams (seed, pass, c, *)
        halton: Scrambled Halton cavity draws
        min_accepted: Fewer accepted draws skip the update
        statistic: Feature map replacing the edge mismatch count
        n_jobs: joblib workers for the simulation chunks

    Returns:
        The same state object
    """
    draws_per_site = config.EP_DRAWS_PER_SITE if draws_per_site is None else draws_per_site
    target_accept = config.TARGET_ACCEPTANCE if target_accept is None else target_accept
    min_accepted = config.EP_MIN_ACCEPTED if min_accepted is None else min_accepted
    if not 0 < target_accept <= 1:
        raise ConfigurationError('target acceptance must lie in (0, 1]')
    obs = panel[c]

    cavity = state.cavity(c)
    cav_precision = regularize(cavity.precision, f'cavity precision of site {obs.network_id}')
    cav_cov = np.linalg.inv(cav_precision)
    cav_cov = 0.5 * (cav_cov + cav_cov.T)
    cav_mean = cav_cov @ cavity.shift

    rng = make_generator(seed, state.pass_count, c, _DRAW_STREAM)
    free = gaussian_draws(cav_mean, cav_cov, draws_per_site, rng, halton)
    betas = state.prior.expand(free)

    def simulate_chunk(item):
        k, bounds = item
        sim_rng = make_generator(seed, state.pass_count, c, _SIM_STREAM, k)
        sims = simulate_batch(obs.baseline.edges, obs.covariates, betas[bounds.start:bounds.stop],
                              tau, sim_rng, shocks).final
        return _site_distances(sims, obs.followup.edges, statistic)

    chunks = list(enumerate(chunk_bounds(draws_per_site, config.SIMULATION_CHUNK_SIZE)))
    distances = np.concatenate(parallel_map(simulate_chunk, chunks, n_jobs))

    if target_accept >= 1:
        threshold = float('inf')
    else:
        threshold = float(np.quantile(distances, target_accept, method='inverted_cdf'))
    accepted = distances <= threshold
    n_accepted = int(accepted.sum())

    floor = max(min_accepted, state.dim + 1)
    if n_accepted < floor:
        logger.warning(f'Site {obs.network_id}: {n_accepted} accepted draws is below the floor of '
                       f'{floor}; update skipped')
        state.history.append(SiteRecord(state.pass_count, obs.network_id, 'skipped', n_accepted, threshold, 0.0))
        return state

    kept = free[accepted]
    mean = kept.mean(axis=0)
    cov = np.atleast_2d(np.cov(kept, rowvar=False))
    cov = regularize(cov, f'moment covariance of site {obs.network_id}')
    new_precision = np.linalg.inv(cov)
    new_precision = 0.5 * (new_precision + new_precision.T)

    site_precision = new_precision - cav_precision
    site = GaussianSite(0.5 * (site_precision + site_precision.T), new_precision @ mean - cavity.shift)
    change = site.change_from(state.sites[c])
    state.replace_site(c, site)
    state.history.append(SiteRecord(state.pass_count, obs.network_id, 'updated', n_accepted, threshold, change))
    logger.debug(f'Site {obs.network_id}: kept {n_accepted} draws at threshold {threshold:.4g}, '
                 f'change {change:.3e}')
    return state


def posterior_summary(state: EpState, names: Sequence[str]) -> EpPosterior:
    """Gaussian posterior over every coefficient; pinned ones have zero variance."""
    approx = state.approximation()
    free_cov = np.linalg.inv(regularize(approx.precision, 'posterior precision'))
    free_cov = 0.5 * (free_cov + free_cov.T)
    free_mean = free_cov @ approx.shift

    prior = state.prior
    mean = prior.expand(free_mean[None, :])[0]
    cov = np.zeros((prior.dim, prior.dim))
    idx = prior.free_indices
    cov[np.ix_(idx, idx)] = free_cov
    sd = np.sqrt(np.diag(cov))

    quantiles = np.array([mean + norm.ppf(q) * sd for q in QUANTILE_LEVELS])
    with np.errstate(divide='ignore', invalid='ignore'):
        prob_negative = np.where(sd > 0, norm.cdf(-mean / np.where(sd > 0, sd, 1.0)), (mean < 0).astype(float))
    return EpPosterior(names=list(names), mean=mean, cov=cov, sd=sd, quantiles=quantiles,
                       prob_negative=prob_negative)


def ep_run(panel: NetworkPanel,
           prior: PriorSpec,
           shocks: ShockSpec = ShockSpec(),
           tau: Optional[int] = None,
           passes: Optional[int] = None,
           draws_per_site: Optional[int] = None,
           target_accept: Optional[float] = None,
           seed: int = 0,
           halton: bool = False,
           tolerance: Optional[float] = None,
           min_accepted: Optional[int] = None,
           statistics: Optional[Sequence[SiteStatistic]] = None,
           n_jobs: int = 1) -> Tuple[EpState, EpPosterior]:
    """
    Sequential EP-ABC over the classrooms of a panel.

    Runs up to `passes` sweeps, stopping early once the largest change in a
    site's natural parameters during a sweep falls below `tolerance`.

    Raises:
        EstimationError: when every site of a sweep is skipped
    """
    tau = prior.tau if tau is None else tau
    if tau is None:
        raise ConfigurationError('EP needs a fixed number of rounds')
    if prior.dim != ParamVector.dim(panel.n_covariates):
        raise ConfigurationError(f'prior has {prior.dim} coefficients, the panel needs '
                                 f'{ParamVector.dim(panel.n_covariates)}')
    if len(panel) == 0:
        raise ConfigurationError('panel is empty')
    if statistics is not None and len(statistics) != len(panel):
        raise ConfigurationError('one site statistic per network is required')
    passes = config.EP_PASSES if passes is None else passes
    tolerance = config.EP_TOLERANCE if tolerance is None else tolerance

    state = EpState.initial(prior, len(panel))
    for _ in range(passes):
        start = len(state.history)
        for c in range(len(panel)):
            ep_update_site(state, c, panel, shocks, tau, draws_per_site, target_accept, seed, halton,
                           min_accepted, None if statistics is None else statistics[c], n_jobs)
        records = state.history[start:]
        if all(r.status == 'skipped' for r in records):
            raise EstimationError(f'every site update failed in pass {state.pass_count + 1}; '
                                  'increase draws per site or the target acceptance rate')
        metric = max(r.change for r in records)
        if state.convergence and metric > state.convergence[-1]:
            logger.warning(f'EP convergence metric rose from {state.convergence[-1]:.3e} to {metric:.3e}')
        state.convergence.append(metric)
        state.pass_count += 1
        logger.info(f'EP pass {state.pass_count} finished: max site change {metric:.3e}, '
                    f'{sum(r.status == "skipped" for r in records)} sites skipped')
        if metric < tolerance:
            break

    return state, posterior_summary(state, ParamVector.names(panel.covariate_names))


def ep_run_local(panel: NetworkPanel,
                 prior: PriorSpec,
                 summaries: Sequence,
                 shocks: ShockSpec = ShockSpec(),
                 tau: Optional[int] = None,
                 passes: Optional[int] = None,
                 draws_per_site: Optional[int] = None,
                 target_accept: Optional[float] = None,
                 seed: int = 0,
                 halton: bool = False,
                 tolerance: Optional[float] = None,
                 min_accepted: Optional[int] = None,
                 n_jobs: int = 1) -> Tuple[EpState, EpPosterior]:
    """EP-ABC accepting draws by the distance between fitted local summaries."""
    if len(summaries) != len(panel):
        raise ConfigurationError(f'{len(summaries)} local summaries for {len(panel)} networks')
    for obs, summary in zip(panel, summaries):
        if summary.slopes.shape[1] != len(off_diagonal_pairs(obs.n_agents)[0]):
            raise ConfigurationError(f'summary for network {summary.network_id} was fitted on another shape')
    return ep_run(panel, prior, shocks, tau, passes, draws_per_site, target_accept, seed, halton,
                  tolerance, min_accepted, [summary.apply for summary in summaries], n_jobs)
