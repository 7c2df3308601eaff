"""
Exact Markov chain of the game over all 2^(N(N-1)) networks of a small classroom.

State codes set bit p when the p-th ordered pair (row-major, diagonal
skipped) is linked. For N=2 the codes 0, 1, 2, 3 are the networks
(g12, g21) = (0,0), (1,0), (0,1), (1,1).
"""
from typing import List, Tuple

import numpy as np
from scipy.special import comb, logsumexp, softmax

from config import config
from components.errors import CapacityError, ConfigurationError, IdentificationBoundError, NumericalError
from components.helpers import write_table
from components.logger import get_logger
from components.model import (CovariateSet, Network, ParamVector, ShockSpec, accept_prob,
                              coefficient_maps, marginal_gains_batch, meeting_logits_batch,
                              off_diagonal_pairs, utility_components_batch)

logger = get_logger(__name__)


def n_pairs(n_agents: int) -> int:
    return n_agents * (n_agents - 1)


def encode_state(g: Network) -> int:
    bits = g.vector().astype(np.int64)
    return int((bits << np.arange(len(bits), dtype=np.int64)).sum())


def decode_state(code: int, n_agents: int) -> Network:
    m = n_pairs(n_agents)
    if not 0 <= code < 2 ** m:
        raise ConfigurationError(f'state code {code} outside [0, 2^{m})')
    bits = (int(code) >> np.arange(m)) & 1
    return Network.from_vector(bits, n_agents)


def state_bits(n_agents: int) -> np.ndarray:
    """(S, P) matrix of pair bits for every state code."""
    m = n_pairs(n_agents)
    codes = np.arange(2 ** m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(np.int8)


def all_states(n_agents: int) -> np.ndarray:
    """(S, N, N) adjacency matrices indexed by state code."""
    bits = state_bits(n_agents)
    rows, cols = off_diagonal_pairs(n_agents)
    states = np.zeros((bits.shape[0], n_agents, n_agents), dtype=np.int8)
    states[:, rows, cols] = bits
    return states


def neighbor_codes(n_agents: int) -> np.ndarray:
    """(S, P) code of the network reached by toggling each pair."""
    m = n_pairs(n_agents)
    codes = np.arange(2 ** m, dtype=np.int64)
    return codes[:, None] ^ (np.int64(1) << np.arange(m, dtype=np.int64))


def _check_size(n_agents: int) -> None:
    if n_pairs(n_agents) > config.MAX_EXACT_PAIRS:
        raise CapacityError(
            f'exact chain for N={n_agents} needs 2^{n_pairs(n_agents)} states; '
            f'limit is N(N-1) <= {config.MAX_EXACT_PAIRS}')


def chain_primitives(X: CovariateSet, beta: ParamVector,
                     shocks: ShockSpec = ShockSpec()) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Meeting probabilities and toggle probabilities for every (state, pair).

    Returns:
        rho (S, P), flip (S, P) probability the selected pair toggles, and
        stay (S, P) its complement computed without cancellation
    """
    beta.check_covariates(X)
    n = X.n_agents
    _check_size(n)
    rows, cols = off_diagonal_pairs(n)
    states = all_states(n).astype(float)
    beta_arr = np.broadcast_to(beta.to_array(), (states.shape[0], beta.to_array().shape[0]))

    logits = meeting_logits_batch(states, X, beta_arr)[:, rows, cols]
    rho = softmax(logits, axis=1)

    c_direct, c_mutual, c_indirect = coefficient_maps(X, beta)
    gains = marginal_gains_batch(states, c_direct, c_mutual, c_indirect)[:, rows, cols]
    linked = state_bits(n).astype(bool)
    # Toggling a linked pair severs it
    flip = np.where(linked, accept_prob(-gains, shocks), accept_prob(gains, shocks))
    stay = np.where(linked, accept_prob(gains, shocks), accept_prob(-gains, shocks))
    return rho, flip, stay


def transition_from_primitives(rho: np.ndarray, flip: np.ndarray, stay: np.ndarray = None) -> np.ndarray:
    """
    Assemble the transition matrix from per-(state, pair) meeting and toggle probabilities.

    Off-diagonal entry to the neighbor across pair p is rho * flip; the
    diagonal collects rho * stay over all pairs.
    """
    n_states, m = rho.shape
    if stay is None:
        stay = 1.0 - flip
    codes = np.arange(n_states)
    neighbors = codes[:, None] ^ (1 << np.arange(m))
    Pi = np.zeros((n_states, n_states))
    Pi[codes[:, None], neighbors] = rho * flip
    Pi[codes, codes] = (rho * stay).sum(axis=1)
    return Pi


def build_transition(X: CovariateSet, beta: ParamVector, shocks: ShockSpec = ShockSpec()) -> np.ndarray:
    """
    One-round transition matrix over all networks of the classroom.

    Args:
        X: Covariates (N(N-1) <= 12)
        beta: Coefficients
        shocks: Taste-shock family

    Returns:
        Dense row-stochastic (S, S) matrix
    """
    rho, flip, stay = chain_primitives(X, beta, shocks)
    Pi = transition_from_primitives(rho, flip, stay)
    logger.debug(f'Built {Pi.shape[0]}-state transition matrix for N={X.n_agents}')
    return Pi


def matrix_power(Pi: np.ndarray, tau: int) -> np.ndarray:
    """Pi^tau by repeated squaring; tau = 0 gives the identity."""
    if tau < 0:
        raise ConfigurationError('tau must be nonnegative')
    return np.linalg.matrix_power(Pi, int(tau))


def stationary(Pi: np.ndarray, tol: float = None, max_iter: int = None) -> np.ndarray:
    """
    Stationary distribution by power iteration from the uniform law.

    Raises:
        NumericalError: when the residual is still above tol after max_iter sweeps
    """
    tol = config.STATIONARY_TOL if tol is None else tol
    max_iter = config.STATIONARY_MAX_ITER if max_iter is None else max_iter
    pi = np.full(Pi.shape[0], 1.0 / Pi.shape[0])
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        nxt = pi @ Pi
        nxt /= nxt.sum()
        residual = np.max(np.abs(nxt - pi))
        pi = nxt
        if residual < tol:
            logger.debug(f'Power iteration converged after {iteration} sweeps (residual {residual:.2e})')
            return pi
    raise NumericalError(
        f'power iteration did not reach residual {tol:.1e} in {max_iter} sweeps; last residual {residual:.3e}')


def count_positive_entries(Pi_power: np.ndarray) -> int:
    return int(np.count_nonzero(Pi_power > 0))


def canonical_positive_counts(n_agents: int) -> np.ndarray:
    """
    Positive-entry count of Pi^tau for tau = 0..N(N-1).

    Entry (g, w) of Pi^tau is positive exactly when g and w differ in at most
    tau pairs, whatever the coefficients.
    """
    m = n_pairs(n_agents)
    per_row = np.cumsum([comb(m, d, exact=True) for d in range(m + 1)])
    return np.array([(2 ** m) * int(c) for c in per_row], dtype=np.int64)


def infer_tau(Pi_power: np.ndarray) -> int:
    """
    Number of rounds whose canonical positive-entry count matches Pi_power.

    Raises:
        IdentificationBoundError: when no tau in 1..N(N-1) matches
    """
    n_states = Pi_power.shape[0]
    m = int(round(np.log2(n_states)))
    n_agents = int(round((1 + np.sqrt(1 + 4 * m)) / 2))
    if 2 ** m != n_states or n_pairs(n_agents) != m:
        raise ConfigurationError(f'{n_states} states do not correspond to a classroom size')
    observed = count_positive_entries(Pi_power)
    counts = canonical_positive_counts(n_agents)
    for tau in range(1, m + 1):
        if counts[tau] == observed:
            return tau
    raise IdentificationBoundError(
        f'{observed} positive entries match no tau in 1..{m} (canonical counts {counts[1:].tolist()})')


def state_potentials(X: CovariateSet, beta: ParamVector) -> np.ndarray:
    """Potential of every state, in code order."""
    c_direct, c_mutual, c_indirect = coefficient_maps(X, beta)
    terms = utility_components_batch(all_states(X.n_agents).astype(float), c_direct, c_mutual, c_indirect)
    return terms[..., 0].sum(-1) + 0.5 * terms[..., 1].sum(-1) + terms[..., 2].sum(-1)


def potential_stationary(X: CovariateSet, beta: ParamVector) -> np.ndarray:
    """
    Closed-form stationary law proportional to exp(potential).

    Valid when meetings ignore the current network and the covariates are
    symmetric distances.
    """
    _check_size(X.n_agents)
    if beta.link_persistence != 0.0 or beta.instrument_slope != 0.0:
        raise ConfigurationError('closed-form stationary law needs meetings independent of the network')
    if not X.is_symmetric():
        raise ConfigurationError('closed-form stationary law needs symmetric pair covariates')
    q = state_potentials(X, beta)
    return np.exp(q - logsumexp(q))


def flow_balance_gap(Pi: np.ndarray, pi: np.ndarray) -> float:
    """Largest violation of pi_g Pi_gw = pi_w Pi_wg over all state pairs."""
    flows = pi[:, None] * Pi
    return float(np.max(np.abs(flows - flows.T)))


def dump_chain_csv(transition_path: str, stationary_path: str, Pi: np.ndarray, pi: np.ndarray) -> List[str]:
    """Write nonzero transition entries and the stationary law as CSV."""
    src, dst = np.nonzero(Pi)
    write_table(transition_path, {
        'headers': ['from_state', 'to_state', 'probability'],
        'rows': [[int(a), int(b), float(Pi[a, b])] for a, b in zip(src, dst)],
    })
    write_table(stationary_path, {
        'headers': ['state', 'probability'],
        'rows': [[code, float(p)] for code, p in enumerate(pi)],
    })
    logger.info(f'Wrote transition matrix to {transition_path} and stationary law to {stationary_path}')
    return [transition_path, stationary_path]
