"""
Seeded forward simulation of the meeting-and-choice game.

The core routine advances a batch of copies of one classroom, each under its
own coefficient vector, so thousands of parameter draws cost one vectorized
pass per round.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import softmax

from components.errors import ConfigurationError
from components.helpers import make_generator
from components.logger import get_logger
from components.model import (CovariateSet, Network, ParamVector, ShockSpec, SimConfig,
                              accept_prob, coefficient_maps_batch, off_diagonal_pairs)
from components.panel import NetworkPanel

logger = get_logger(__name__)


@dataclass
class SimulationCounters:
    """Tallies of meetings and decisions, used to audit scenario overrides."""
    n_pairs: int
    decisions: int = 0
    linked: int = 0
    pair_selections: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pair_selections is None:
            self.pair_selections = np.zeros(self.n_pairs, dtype=np.int64)

    @property
    def link_rate(self) -> float:
        return self.linked / self.decisions if self.decisions else float('nan')


@dataclass
class BatchResult:
    final: np.ndarray  # (B, N, N) int8
    trajectory: Optional[np.ndarray] = None  # (rounds + 1, B, N, N) int8


@dataclass
class SimResult:
    final: Network
    trajectory: Optional[List[Network]]
    seed: int


def _as_beta_array(betas) -> np.ndarray:
    if isinstance(betas, ParamVector):
        return betas.to_array()[None, :]
    return np.atleast_2d(np.asarray(betas, dtype=float))


def simulate_batch(g0: np.ndarray,
                   X: CovariateSet,
                   betas,
                   n_rounds: int,
                   rng: np.random.Generator,
                   shocks: ShockSpec = ShockSpec(),
                   uniform_meetings: bool = False,
                   fixed_accept: Optional[float] = None,
                   record_trajectory: bool = False,
                   counters: Optional[SimulationCounters] = None) -> BatchResult:
    """
    Run the game for n_rounds on B copies of one classroom.

    Each round draws two uniforms per copy: one selects the meeting pair by
    inverting the cumulative meeting distribution, the other decides the link.

    Args:
        g0: (N, N) starting network shared by all copies, or (B, N, N)
        X: Covariates of the classroom
        betas: ParamVector or (B, dim) coefficient array
        n_rounds: Number of rounds
        rng: Random stream
        shocks: Taste-shock family
        uniform_meetings: Select pairs uniformly instead of by the meeting function
        fixed_accept: Constant link probability replacing the choice rule
        record_trajectory: Keep every intermediate network
        counters: Optional tallies updated in place

    Returns:
        BatchResult with final networks and optional trajectory
    """
    beta_arr = _as_beta_array(betas)
    n_draws = beta_arr.shape[0]
    n = X.n_agents
    if beta_arr.shape[1] != ParamVector.dim(X.n_covariates):
        raise ConfigurationError(
            f'coefficient arrays have {beta_arr.shape[1]} columns, expected {ParamVector.dim(X.n_covariates)}')

    G = np.array(np.broadcast_to(np.asarray(g0, dtype=float), (n_draws, n, n)))
    rows, cols = off_diagonal_pairs(n)
    n_pairs = len(rows)
    lay = ParamVector.layout(X.n_covariates)

    c_direct, c_mutual, c_indirect = coefficient_maps_batch(X, beta_arr)
    base_logits = np.einsum('pk,bk->bp', X.pair_covariates[rows, cols], beta_arr[:, lay['matching']])
    delta0 = beta_arr[:, lay['link_persistence']]
    delta1 = beta_arr[:, lay['instrument_slope']]
    z_pairs = X.instrument[rows, cols][None, :]
    constant_meetings = not np.any(delta0) and not np.any(delta1)
    cum_fixed = None
    if constant_meetings and not uniform_meetings:
        cum_fixed = np.cumsum(softmax(base_logits, axis=1), axis=1)

    draws = np.arange(n_draws)
    trajectory = [G.astype(np.int8)] if record_trajectory else None
    if n_pairs == 0:
        n_rounds = 0

    for _ in range(n_rounds):
        u_meet = rng.random(n_draws)
        u_choice = rng.random(n_draws)

        if uniform_meetings:
            chosen = np.minimum((u_meet * n_pairs).astype(np.int64), n_pairs - 1)
        else:
            if constant_meetings:
                cum = cum_fixed
            else:
                linked = G[:, rows, cols]
                logits = base_logits + delta0 * linked + delta1 * (1.0 - linked) * z_pairs
                cum = np.cumsum(softmax(logits, axis=1), axis=1)
            chosen = np.minimum((cum < (u_meet * cum[:, -1])[:, None]).sum(axis=1), n_pairs - 1)

        i = rows[chosen]
        j = cols[chosen]
        if fixed_accept is None:
            gain = (c_direct[draws, i, j]
                    + c_mutual[draws, i, j] * G[draws, j, i]
                    + np.einsum('bn,bn->b', c_indirect[draws, i, :], G[draws, j, :])
                    + np.einsum('bn,bn->b', c_indirect[draws, j, :], G[draws, :, i]))
            p_link = accept_prob(gain, shocks)
        else:
            p_link = fixed_accept
        linked_now = u_choice < p_link
        G[draws, i, j] = linked_now

        if counters is not None:
            counters.decisions += n_draws
            counters.linked += int(linked_now.sum())
            counters.pair_selections += np.bincount(chosen, minlength=n_pairs)
        if record_trajectory:
            trajectory.append(G.astype(np.int8))

    return BatchResult(
        final=G.astype(np.int8),
        trajectory=np.stack(trajectory) if record_trajectory else None,
    )


def step(g: Network, X: CovariateSet, beta: ParamVector, shocks: ShockSpec,
         rng: np.random.Generator) -> Network:
    """One round of the game: a meeting, then a myopic link decision."""
    beta.check_covariates(X)
    return Network(simulate_batch(g.edges, X, beta, 1, rng, shocks).final[0])


def simulate(g0: Network, X: CovariateSet, beta: ParamVector, shocks: ShockSpec,
             cfg: SimConfig) -> SimResult:
    """
    Apply cfg.n_rounds rounds to g0 with the stream seeded by cfg.seed.

    Returns:
        SimResult with the final network and, if requested, every round's network
    """
    beta.check_covariates(X)
    rng = make_generator(cfg.seed)
    result = simulate_batch(g0.edges, X, beta, cfg.n_rounds, rng, shocks,
                            record_trajectory=cfg.record_trajectory)
    trajectory = None
    if cfg.record_trajectory:
        trajectory = [Network(state[0]) for state in result.trajectory]
    return SimResult(final=Network(result.final[0]), trajectory=trajectory, seed=cfg.seed)


def simulate_panel_followups(panel: NetworkPanel,
                             betas: np.ndarray,
                             n_rounds: int,
                             seed: int,
                             stream: Sequence[int] = (),
                             shocks: ShockSpec = ShockSpec(),
                             networks: Optional[Sequence[int]] = None) -> List[np.ndarray]:
    """
    Simulate follow-ups of every panel network from its baseline for each draw.

    Network c draws from the stream (seed, c, *stream).

    Returns:
        One (B, N_c, N_c) array per simulated network
    """
    indices = range(len(panel)) if networks is None else networks
    out = []
    for c in indices:
        obs = panel[c]
        rng = make_generator(seed, c, *stream)
        out.append(simulate_batch(obs.baseline.edges, obs.covariates, betas, n_rounds, rng, shocks).final)
    logger.debug(f'Simulated {len(out)} networks for {np.atleast_2d(betas).shape[0]} draws')
    return out
