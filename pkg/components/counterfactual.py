"""
Policy counterfactuals: rerun the game from the baseline networks under
modified meetings, modified choices, or reassigned classrooms, and track
aggregate welfare round by round.

Welfare is always evaluated with the unmodified utility coefficients of each
posterior draw; scenarios change how students meet and decide, not what
they value.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import config
from components.covariates import build_covariates
from components.dyadic_regression import dyad_frame_from_panel, dyadic_ols
from components.errors import ConfigurationError
from components.helpers import make_generator, weighted_quantiles
from components.logger import get_logger
from components.model import Network, ParamVector, ShockSpec, coefficient_maps_batch, utility_components_batch
from components.panel import NetworkObservation, NetworkPanel
from components.simulator import SimulationCounters, simulate_batch

logger = get_logger(__name__)

WELFARE_COMPONENTS = ('direct', 'mutual', 'indirect_popularity')
BAND_LEVELS = (0.025, 0.975)


class ScenarioKind(str, Enum):
    BASE = 'base'
    RANDOM_MATCHING = 'random_matching'
    TRACKING = 'tracking'
    RANDOM_FRIENDSHIP = 'random_friendship'


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.BASE
    tracking_key: str = field(default_factory=lambda: config.TRACKING_KEY)

    @property
    def uniform_meetings(self) -> bool:
        return self.kind == ScenarioKind.RANDOM_MATCHING

    @property
    def fixed_accept(self) -> Optional[float]:
        return 0.5 if self.kind == ScenarioKind.RANDOM_FRIENDSHIP else None

    @property
    def salt(self) -> int:
        return list(ScenarioKind).index(self.kind) + 1


@dataclass
class WelfareTrajectory:
    """
    Per-round welfare of every simulated panel.

    values[t, s, k] is component k summed over classrooms and students at
    round t of simulation s, divided by normalizer.
    """
    values: np.ndarray  # (rounds + 1, S, 3)
    normalizer: float = 1.0

    @property
    def n_rounds(self) -> int:
        return self.values.shape[0] - 1

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=2)

    def component(self, name: str) -> np.ndarray:
        if name == 'total':
            return self.total
        return self.values[:, :, WELFARE_COMPONENTS.index(name)]

    def summary_table(self) -> Dict[str, list]:
        """Long table of (round, component, mean, lo, hi) with 95% bands across simulations."""
        rows = []
        for name in ('total',) + WELFARE_COMPONENTS:
            series = self.component(name)
            bands = weighted_quantiles(series.T, None, BAND_LEVELS)
            means = series.mean(axis=1)
            for t in range(series.shape[0]):
                rows.append([t, name, means[t], bands[0, t], bands[1, t]])
        return {'headers': ['round', 'component', 'mean', 'lo', 'hi'], 'rows': rows}


@dataclass
class ScenarioResult:
    scenario: Scenario
    panel: NetworkPanel
    welfare: WelfareTrajectory
    followups: List[np.ndarray]  # per network (S, N, N)
    counters: List[SimulationCounters]

    @property
    def decisions(self) -> int:
        return sum(c.decisions for c in self.counters)

    @property
    def linked(self) -> int:
        return sum(c.linked for c in self.counters)


def _rebuild_edges(edges_by_room: Dict[int, np.ndarray], origins: pd.DataFrame) -> np.ndarray:
    """Adjacency among reassigned students keeping only links between former classmates."""
    n = len(origins)
    out = np.zeros((n, n), dtype=np.int8)
    room = origins['origin_room'].to_numpy()
    pos = origins['origin_position'].to_numpy()
    for a in range(n):
        for b in range(n):
            if a != b and room[a] == room[b]:
                out[a, b] = edges_by_room[room[a]][pos[a], pos[b]]
    return out


def apply_tracking(panel: NetworkPanel, key: Optional[str] = None) -> NetworkPanel:
    """
    Reassign students to classrooms by a skill ranking within each (school, grade).

    Students are sorted by key (ties keep panel order) and poured into the
    original classrooms in panel order, each keeping its size. Links survive
    only between students who shared a classroom before, and covariates are
    recomputed for the new classrooms.

    Raises:
        ConfigurationError: when a classroom has no agent table or lacks the key
    """
    key = config.TRACKING_KEY if key is None else key
    names = panel.covariate_names
    tracked: List[Optional[NetworkObservation]] = [None] * len(panel)
    for (school, grade), members in panel.groups().items():
        tables = []
        for c in members:
            agents = panel[c].covariates.agents
            if agents is None:
                raise ConfigurationError(f'network {panel[c].network_id} has no agent table to reassign')
            if key not in agents.columns:
                raise ConfigurationError(f'tracking key {key!r} is not an attribute of network {panel[c].network_id}')
            table = agents.reset_index(drop=True).copy()
            table['origin_room'] = c
            table['origin_position'] = np.arange(len(table))
            tables.append(table)
        pool = pd.concat(tables, ignore_index=True).sort_values(key, kind='mergesort').reset_index(drop=True)

        start = 0
        for c in members:
            obs = panel[c]
            chunk = pool.iloc[start:start + obs.n_agents].reset_index(drop=True)
            start += obs.n_agents
            agents = chunk.drop(columns=['origin_room', 'origin_position'])
            if 'classroom_id' in agents.columns:
                agents['classroom_id'] = obs.network_id
            covariates = build_covariates(agents, attributes=names)
            baseline = _rebuild_edges({m: panel[m].baseline.edges for m in members}, chunk)
            followup = _rebuild_edges({m: panel[m].followup.edges for m in members}, chunk)
            tracked[c] = NetworkObservation(obs.network_id, Network(baseline), Network(followup),
                                            covariates, school, grade)
    logger.info(f'Reassigned {panel.n_students} students by {key} across {len(panel.groups())} school grades')
    return NetworkPanel(tracked)


def run_scenario(panel: NetworkPanel,
                 posterior_draws,
                 scenario: Scenario,
                 tau: int,
                 replicates: int = 1,
                 seed: int = 0,
                 shocks: ShockSpec = ShockSpec(),
                 common_random_numbers: bool = True) -> ScenarioResult:
    """
    Simulate every classroom tau rounds from its baseline under a scenario.

    Args:
        panel: Observed panel (baselines and covariates)
        posterior_draws: (S, dim) array or list of ParamVector
        scenario: Policy scenario
        tau: Number of rounds
        replicates: Simulations per draw
        seed: Run seed; network c uses the stream (seed, c), or (seed, c, salt)
            without common random numbers
        shocks: Taste-shock family
        common_random_numbers: Share random streams across scenarios

    Returns:
        ScenarioResult with welfare per round and final networks
    """
    if isinstance(posterior_draws, (list, tuple)) and posterior_draws and isinstance(posterior_draws[0], ParamVector):
        draws = np.stack([d.to_array() for d in posterior_draws])
    else:
        draws = np.atleast_2d(np.asarray(posterior_draws, dtype=float))
    if draws.shape[1] != ParamVector.dim(panel.n_covariates):
        raise ConfigurationError(f'posterior draws have {draws.shape[1]} coefficients, the panel needs '
                                 f'{ParamVector.dim(panel.n_covariates)}')
    if replicates < 1:
        raise ConfigurationError('replicates must be positive')
    betas = np.repeat(draws, replicates, axis=0)

    sim_panel = apply_tracking(panel, scenario.tracking_key) if scenario.kind == ScenarioKind.TRACKING else panel
    welfare = np.zeros((tau + 1, betas.shape[0], len(WELFARE_COMPONENTS)))
    followups, counters = [], []
    for c, obs in enumerate(sim_panel):
        keys = (c,) if common_random_numbers else (c, scenario.salt)
        tally = SimulationCounters(obs.n_agents * (obs.n_agents - 1))
        result = simulate_batch(obs.baseline.edges, obs.covariates, betas, tau, make_generator(seed, *keys), shocks,
                                uniform_meetings=scenario.uniform_meetings, fixed_accept=scenario.fixed_accept,
                                record_trajectory=True, counters=tally)
        maps = coefficient_maps_batch(obs.covariates, betas)
        for t in range(tau + 1):
            terms = utility_components_batch(result.trajectory[t].astype(float), *maps).sum(axis=1)
            welfare[t, :, 0] += terms[:, 0]
            welfare[t, :, 1] += terms[:, 1]
            welfare[t, :, 2] += terms[:, 2] + terms[:, 3]
        followups.append(result.final)
        counters.append(tally)

    logger.info(f'Scenario {scenario.kind.value}: {betas.shape[0]} simulated panels over {tau} rounds')
    return ScenarioResult(scenario, sim_panel, WelfareTrajectory(welfare), followups, counters)


def welfare_normalizer(n_students: int, direct_gender_coef: float) -> float:
    """
    Number of students times minus the direct utility coefficient on gender distance.

    A positive coefficient gives a negative normalizer, which reverses the
    sign of every difference; it is returned as is and logged.
    """
    normalizer = float(n_students) * -float(direct_gender_coef)
    if normalizer < 0:
        logger.warning(f'Direct gender-distance coefficient {direct_gender_coef:.4g} is positive; '
                       'normalized welfare differences change sign')
    return normalizer


def welfare_difference(base: WelfareTrajectory, alt: WelfareTrajectory, normalizer: float) -> WelfareTrajectory:
    """
    (alt - base) / normalizer per round, simulation and component.

    Simulations are paired by position, so both runs must use the same draws.
    """
    if base.values.shape != alt.values.shape:
        raise ConfigurationError(f'welfare trajectories differ in shape: {base.values.shape} vs {alt.values.shape}')
    if normalizer == 0 or not np.isfinite(normalizer):
        raise ConfigurationError('welfare normalizer must be finite and nonzero')
    return WelfareTrajectory((alt.values - base.values) / normalizer, normalizer)


@dataclass
class ProjectionSummary:
    names: List[str]
    coefficients: np.ndarray  # (S, k + 1)
    edge_mean: np.ndarray  # (S,)
    edge_sd: np.ndarray  # (S,)

    def summary_table(self) -> Dict[str, list]:
        rows = []
        series = [(name, self.coefficients[:, i]) for i, name in enumerate(self.names)]
        series += [('edge_mean', self.edge_mean), ('edge_sd', self.edge_sd)]
        for name, values in series:
            lo, hi = weighted_quantiles(values, None, BAND_LEVELS)[:, 0]
            rows.append([name, float(values.mean()), lo, hi])
        return {'headers': ['statistic', 'mean', 'q2.5', 'q97.5'], 'rows': rows}


def scenario_projection_summary(followups: Sequence[np.ndarray], panel: NetworkPanel) -> ProjectionSummary:
    """
    Dyadic projection (no fixed effects) of every simulated follow-up panel.

    Args:
        followups: Per network (S, N, N) simulated follow-ups
        panel: Panel providing covariates, e.g. ScenarioResult.panel
    """
    names = list(panel.covariate_names)
    n_sims = followups[0].shape[0] if followups else 0
    coefs, means, sds = [], [], []
    for s in range(n_sims):
        frame = dyad_frame_from_panel(panel, [sims[s] for sims in followups])
        fit = dyadic_ols(frame, names, include_fixed_effects=False)
        coefs.append(fit.coef)
        means.append(frame['edge'].mean())
        sds.append(frame['edge'].std(ddof=0))
    return ProjectionSummary(names=['intercept'] + names, coefficients=np.array(coefs),
                             edge_mean=np.array(means), edge_sd=np.array(sds))
