"""
Dyadic regressions of follow-up edge indicators on pair covariates.

Sender and receiver fixed effects are absorbed by alternating demeaning;
standard errors are clustered by classroom. An explicit dummy-variable
regression through statsmodels is kept for small frames and cross-checks.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import norm

from config import config
from components.errors import ConfigurationError, NumericalError, RankDeficiencyError
from components.logger import get_logger
from components.model import off_diagonal_pairs
from components.panel import NetworkPanel

logger = get_logger(__name__)

CLUSTER_COLUMN = 'classroom_id'
RESPONSE_COLUMN = 'edge'


@dataclass
class DyadicFit:
    names: List[str]
    coef: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    r_squared: float
    n_obs: int
    n_clusters: int
    fixed_effects: bool

    @property
    def pvalues(self) -> np.ndarray:
        with np.errstate(divide='ignore', invalid='ignore'):
            z = np.where(self.se > 0, np.abs(self.coef) / np.where(self.se > 0, self.se, 1.0), 0.0)
        return 2.0 * norm.sf(z)

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def to_dict(self) -> Dict:
        return {
            'coefficients': {name: {'estimate': self.coef[i], 'se': self.se[i], 'p_value': self.pvalues[i]}
                             for i, name in enumerate(self.names)},
            'r_squared': self.r_squared,
            'n_obs': self.n_obs,
            'n_clusters': self.n_clusters,
            'fixed_effects': self.fixed_effects,
        }


def dyad_frame_from_panel(panel: NetworkPanel, followups: Optional[Sequence[np.ndarray]] = None) -> pd.DataFrame:
    """
    One row per ordered pair of classmates.

    Columns: classroom_id, sender, receiver, edge (follow-up), one column per
    pair covariate (baseline attributes) and instrument.

    Args:
        panel: Observed panel
        followups: Replacement follow-up adjacency matrices, one per network
    """
    frames = []
    names = list(panel.covariate_names)
    for c, obs in enumerate(panel):
        rows, cols = off_diagonal_pairs(obs.n_agents)
        edges = obs.followup.edges if followups is None else np.asarray(followups[c])
        labels = np.arange(obs.n_agents)
        agents = obs.covariates.agents
        if agents is not None and 'agent_id' in agents.columns:
            labels = agents['agent_id'].astype(str).to_numpy()
        frame = pd.DataFrame({
            CLUSTER_COLUMN: obs.network_id,
            'sender': labels[rows],
            'receiver': labels[cols],
            RESPONSE_COLUMN: edges[rows, cols].astype(float),
        })
        for k, name in enumerate(names):
            frame[name] = obs.covariates.pair_covariates[rows, cols, k]
        frame['instrument'] = obs.covariates.instrument[rows, cols]
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=[CLUSTER_COLUMN, 'sender', 'receiver', RESPONSE_COLUMN] + names + ['instrument'])
    return pd.concat(frames, ignore_index=True)


def _group_codes(frame: pd.DataFrame, cluster: str, role: str) -> np.ndarray:
    return frame.groupby([cluster, role], sort=True).ngroup().to_numpy()


def _demean(M: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    sums = np.stack([np.bincount(codes, weights=M[:, col], minlength=n_groups) for col in range(M.shape[1])], axis=1)
    return M - (sums / counts[:, None])[codes]


def absorb_fixed_effects(M: np.ndarray, senders: np.ndarray, receivers: np.ndarray,
                         tol: Optional[float] = None, max_iter: Optional[int] = None) -> np.ndarray:
    """
    Project the columns of M off sender and receiver dummies by alternating demeaning.

    Raises:
        NumericalError: when the sweeps do not settle within max_iter
    """
    tol = config.FE_TOLERANCE if tol is None else tol
    max_iter = config.FE_MAX_ITER if max_iter is None else max_iter
    n_s, n_r = senders.max() + 1, receivers.max() + 1
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    out = M.astype(float).copy()
    for iteration in range(1, max_iter + 1):
        out = _demean(out, senders, n_s)
        nxt = _demean(out, receivers, n_r)
        change = float(np.max(np.abs(nxt - out), initial=0.0))
        out = nxt
        if change <= tol * scale:
            logger.debug(f'Fixed effects absorbed after {iteration} sweeps')
            return out
    raise NumericalError(f'fixed-effect demeaning did not settle within {max_iter} sweeps')


def _n_components(senders: np.ndarray, receivers: np.ndarray) -> int:
    n_s, n_r = senders.max() + 1, receivers.max() + 1
    graph = coo_matrix((np.ones(len(senders)), (senders, receivers + n_s)), shape=(n_s + n_r, n_s + n_r))
    n_comp, _ = connected_components(graph, directed=False)
    return int(n_comp)


def _check_rank(design: np.ndarray, names: Sequence[str]) -> None:
    if design.shape[1] == 0:
        return
    _, R, piv = linalg.qr(design, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag[0] if diag.size else 0.0
    threshold = max(design.shape) * np.finfo(float).eps * max(top, 1.0) * 1e3
    rank = int((diag > threshold).sum())
    if rank < design.shape[1]:
        raise RankDeficiencyError('design matrix is rank deficient', [names[p] for p in piv[rank:]])


def _clustered_fit(design: np.ndarray, target: np.ndarray, clusters: np.ndarray, n_absorbed: int):
    """
    OLS with classroom-clustered covariance from statsmodels.

    statsmodels scales by G/(G-1) * (n-1)/(n-k) with k the visible columns;
    the absorbed effects are added to k by rescaling.
    """
    groups = pd.factorize(clusters)[0]
    n, k = design.shape
    n_groups = int(groups.max()) + 1
    correct = n_groups > 1 and n > k + n_absorbed
    result = sm.OLS(target, design).fit(cov_type='cluster',
                                        cov_kwds={'groups': groups, 'use_correction': correct})
    cov = np.asarray(result.cov_params())
    if correct and n_absorbed:
        cov = cov * (n - k) / (n - k - n_absorbed)
    return np.asarray(result.params), np.asarray(result.resid), 0.5 * (cov + cov.T)


def dyadic_ols(frame: pd.DataFrame,
               covariates: Sequence[str],
               include_fixed_effects: bool = True,
               cluster: str = CLUSTER_COLUMN,
               response: str = RESPONSE_COLUMN) -> DyadicFit:
    """
    Least squares of the edge indicator on pair covariates.

    With fixed effects, sender and receiver effects (per classroom) are
    absorbed and no intercept is reported; without them an intercept is
    added. Clustered covariance uses the factor G/(G-1) * (n-1)/(n-k), with k
    counting absorbed effects net of one normalization per connected block.
    R squared is computed on the demeaned response and is 0 when the
    response does not vary.

    Raises:
        RankDeficiencyError: listing the collinear columns
    """
    covariates = list(covariates)
    missing = [col for col in covariates + [response, cluster] if col not in frame.columns]
    if missing:
        raise ConfigurationError(f'dyad frame lacks columns {missing}')
    if len(frame) == 0:
        raise ConfigurationError('dyad frame is empty')
    y = frame[response].to_numpy(dtype=float)
    X = frame[covariates].to_numpy(dtype=float)
    clusters = frame[cluster].astype(str).to_numpy()

    if include_fixed_effects:
        senders = _group_codes(frame, cluster, 'sender')
        receivers = _group_codes(frame, cluster, 'receiver')
        absorbed = absorb_fixed_effects(np.column_stack([y, X]), senders, receivers)
        y_d, design = absorbed[:, 0], absorbed[:, 1:]
        names = covariates
        n_absorbed = senders.max() + 1 + receivers.max() + 1 - _n_components(senders, receivers)
    else:
        design = np.column_stack([np.ones(len(y)), X])
        y_d = y - y.mean()
        names = ['intercept'] + covariates
        n_absorbed = 0
    target = y_d if include_fixed_effects else y

    _check_rank(design, names)
    coef, resid, cov = _clustered_fit(design, target, clusters, n_absorbed)

    sst = float(y_d @ y_d)
    r_squared = 0.0 if sst <= 0 else 1.0 - float(resid @ resid) / sst
    fit = DyadicFit(names=list(names), coef=coef, se=np.sqrt(np.clip(np.diag(cov), 0.0, None)), cov=cov,
                    r_squared=r_squared, n_obs=len(y), n_clusters=len(np.unique(clusters)),
                    fixed_effects=include_fixed_effects)
    logger.debug(f'Dyadic OLS on {fit.n_obs} dyads in {fit.n_clusters} classrooms, R2 {r_squared:.4f}')
    return fit


def dummy_variable_ols(frame: pd.DataFrame,
                       covariates: Sequence[str],
                       cluster: str = CLUSTER_COLUMN,
                       response: str = RESPONSE_COLUMN) -> DyadicFit:
    """
    Fixed-effects regression with explicit dummies, fitted by statsmodels.

    The design has an intercept, classroom dummies and sender and receiver
    dummies with the first level of each classroom dropped. Only the
    covariate slopes are reported.
    """
    covariates = list(covariates)
    data = frame.reset_index(drop=True)
    room = data[cluster].astype(str)
    parts = [pd.DataFrame({'const': np.ones(len(data))}), data[covariates].astype(float),
             pd.get_dummies(room, prefix='room', drop_first=True, dtype=float)]
    for role in ('sender', 'receiver'):
        label = room + ':' + data[role].astype(str)
        dummies = pd.get_dummies(label, prefix=role, dtype=float)
        firsts = label.groupby(room).min()
        parts.append(dummies.drop(columns=[f'{role}_{first}' for first in firsts]))
    design = pd.concat(parts, axis=1)

    groups = pd.factorize(room)[0]
    result = sm.OLS(data[response].astype(float), design).fit(cov_type='cluster', cov_kwds={'groups': groups})
    cov = result.cov_params().loc[covariates, covariates].to_numpy()
    return DyadicFit(names=covariates, coef=result.params[covariates].to_numpy(),
                     se=result.bse[covariates].to_numpy(), cov=cov, r_squared=float(result.rsquared),
                     n_obs=int(result.nobs), n_clusters=int(groups.max() + 1), fixed_effects=True)


def significance_stars(p_value: float) -> str:
    for level, stars in config.SIGNIFICANCE_STARS:
        if p_value < level:
            return stars
    return ''


def regression_table(fit: DyadicFit) -> Dict[str, list]:
    """Coefficient, standard error and stars per covariate, then R squared and N."""
    rows = [[name, fit.coef[i], fit.se[i], significance_stars(fit.pvalues[i])]
            for i, name in enumerate(fit.names)]
    rows.append(['r_squared', fit.r_squared, '', ''])
    rows.append(['observations', fit.n_obs, '', ''])
    rows.append(['fixed_effects', 'yes' if fit.fixed_effects else 'no', '', ''])
    return {'headers': ['coefficient', 'estimate', 'se', 'stars'], 'rows': rows}
