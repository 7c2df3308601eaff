"""
Numerical identification experiments on exact small-N chains.

Covers recovery of meeting and choice probabilities from a two-agent
transition matrix, limit probes that drive an excluded instrument to
infinity, and the construction of observationally equivalent chains that
share a stationary law.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, softmax

from config import config
from components.errors import ConfigurationError, RecoveryError
from components.exact_chain import (all_states, chain_primitives, matrix_power, n_pairs, neighbor_codes,
                                    stationary, state_bits, transition_from_primitives)
from components.logger import get_logger
from components.model import (CovariateSet, ParamVector, ShockSpec, coefficient_maps,
                              marginal_gains_batch, meeting_logits_batch, off_diagonal_pairs)

logger = get_logger(__name__)

_CHECK_TOL = 1e-12


@dataclass(eq=False)
class GammaVector:
    """
    Meeting probabilities rho[s, p] and toggle probabilities F[s, p].

    F[s, p] is the probability that pair p, once met in state s, moves the
    network to the neighbor across p. Complementary toggles sum to one.
    """
    n_agents: int
    rho: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        m = n_pairs(self.n_agents)
        shape = (2 ** m, m)
        if self.rho.shape != shape or self.F.shape != shape:
            raise ConfigurationError(f'gamma arrays must have shape {shape}')
        if np.any(self.rho <= 0) or np.any(self.rho >= 1) or np.any(self.F <= 0) or np.any(self.F >= 1):
            raise ConfigurationError('gamma entries must lie strictly inside (0, 1)')
        if np.max(np.abs(self.rho.sum(axis=1) - 1.0)) > _CHECK_TOL:
            raise ConfigurationError('meeting probabilities must sum to one in every state')
        nbr = neighbor_codes(self.n_agents)
        reverse = self.F[nbr, np.arange(m)[None, :]]
        if np.max(np.abs(self.F + reverse - 1.0)) > _CHECK_TOL:
            raise ConfigurationError('toggle probabilities of adjacent states must be complementary')

    def max_abs_diff(self, other: 'GammaVector') -> float:
        return float(max(np.max(np.abs(self.rho - other.rho)), np.max(np.abs(self.F - other.F))))


def gamma_from_model(X: CovariateSet, beta: ParamVector, shocks: ShockSpec = ShockSpec()) -> GammaVector:
    rho, flip, _ = chain_primitives(X, beta, shocks)
    return GammaVector(X.n_agents, rho, flip)


def gamma_to_pi(gamma: GammaVector) -> np.ndarray:
    """Transition matrix generated by gamma."""
    return transition_from_primitives(gamma.rho, gamma.F)


def random_gamma(rng: np.random.Generator, n_agents: int = 2, low: float = 0.05, high: float = 0.95) -> GammaVector:
    """Draw an admissible gamma with entries bounded away from 0 and 1."""
    m = n_pairs(n_agents)
    n_states = 2 ** m
    if m == 2:
        r = rng.uniform(low, high, n_states)
        rho = np.column_stack([r, 1.0 - r])
    else:
        rho = rng.dirichlet(np.full(m, 5.0), n_states)
    bits = state_bits(n_agents).astype(bool)
    nbr = neighbor_codes(n_agents)
    F = np.empty((n_states, m))
    base = rng.uniform(low, high, (n_states, m))
    # Draw on the state with the pair unlinked; the linked side is the complement
    F[~bits] = base[~bits]
    lower = np.where(bits, nbr, np.arange(n_states)[:, None])
    F[bits] = 1.0 - base[lower, np.broadcast_to(np.arange(m), (n_states, m))][bits]
    return GammaVector(n_agents, rho, F)


# Two-agent recovery. Unknowns: r_s = rho[s, 0] for s = 0..3 and one toggle
# probability per edge of the 4-cycle, stored on the state where the pair is unlinked.
_EDGES = ((0, 0), (2, 0), (0, 1), (1, 1))


def _edge_tables() -> Tuple[np.ndarray, np.ndarray]:
    edge_of = np.empty((4, 2), dtype=int)
    sign = np.empty((4, 2))
    for e, (base, p) in enumerate(_EDGES):
        other = base ^ (1 << p)
        edge_of[base, p], sign[base, p] = e, 1.0
        edge_of[other, p], sign[other, p] = e, -1.0
    return edge_of, sign


_EDGE_OF, _SIGN = _edge_tables()


def _unpack(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r, f = x[:4], x[4:]
    rho = np.column_stack([r, 1.0 - r])
    F = np.where(_SIGN > 0, f[_EDGE_OF], 1.0 - f[_EDGE_OF])
    return rho, F


def _residual(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    rho, F = _unpack(x)
    return (rho * F - a).reshape(-1)


def _jacobian(x: np.ndarray) -> np.ndarray:
    rho, F = _unpack(x)
    J = np.zeros((8, 8))
    for s in range(4):
        for p in range(2):
            row = 2 * s + p
            J[row, s] = F[s, p] if p == 0 else -F[s, p]
            J[row, 4 + _EDGE_OF[s, p]] = rho[s, p] * _SIGN[s, p]
    return J


def _newton(x: np.ndarray, a: np.ndarray, clip: float, tol: float, max_iter: int = 100) -> Optional[np.ndarray]:
    res = _residual(x, a)
    for _ in range(max_iter):
        norm = np.max(np.abs(res))
        if norm < tol:
            return x
        try:
            step = np.linalg.solve(_jacobian(x), -res)
        except np.linalg.LinAlgError:
            return None
        damping = 1.0
        while damping > 1e-10:
            trial = np.clip(x + damping * step, clip, 1.0 - clip)
            trial_res = _residual(trial, a)
            if np.max(np.abs(trial_res)) < norm:
                x, res = trial, trial_res
                break
            damping *= 0.5
        else:
            return None
    return x if np.max(np.abs(res)) < tol else None


def _walk_cycle(r0: float, a: np.ndarray, clip: float) -> Tuple[np.ndarray, float]:
    """
    Propagate the equations around the 4-cycle from r0 and return the unknowns
    and the mismatch of the closing equation.
    """
    lo, hi = clip, 1.0 - clip
    c = lambda v: min(max(v, lo), hi)
    f_a = c(a[0, 0] / r0)
    r1 = c(a[1, 0] / (1.0 - f_a))
    f_c = c(a[1, 1] / (1.0 - r1))
    r3 = c(1.0 - a[3, 1] / (1.0 - f_c))
    f_d = c(1.0 - a[3, 0] / r3)
    r2 = c(a[2, 0] / f_d)
    f_b = c(1.0 - a[2, 1] / (1.0 - r2))
    x = np.array([r0, r1, r2, r3, f_a, f_d, f_b, f_c])
    return x, (1.0 - r0) * f_b - a[0, 1]


def _cycle_search(a: np.ndarray, clip: float) -> Optional[np.ndarray]:
    lower = max(a[0, 0], clip) * (1.0 + 1e-12)
    grid = np.linspace(lower, 1.0 - clip, 400)
    values = np.array([_walk_cycle(r0, a, clip)[1] for r0 in grid])
    changes = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) <= 0)[0]
    for idx in changes:
        try:
            root = brentq(lambda r0: _walk_cycle(r0, a, clip)[1], grid[idx], grid[idx + 1], xtol=1e-15)
        except ValueError:
            continue
        return _walk_cycle(root, a, clip)[0]
    return None


def recover_gamma(Pi: np.ndarray, n_agents: int = 2) -> GammaVector:
    """
    Recover meeting and toggle probabilities from a two-agent transition matrix.

    Solves the eight equations Pi[s, s^p] = rho[s, p] F[s, p] by damped Newton
    with an analytic Jacobian; if Newton stalls, a root search along the 4-cycle
    of states supplies a starting point that Newton then polishes.

    Raises:
        RecoveryError: if the recovered gamma does not reproduce Pi
    """
    if n_agents != 2:
        raise ConfigurationError('primitive recovery is implemented for two agents')
    Pi = np.asarray(Pi, dtype=float)
    if Pi.shape != (4, 4):
        raise ConfigurationError(f'expected a 4x4 transition matrix, got {Pi.shape}')
    clip = config.RECOVERY_CLIP
    tol = config.RECOVERY_NEWTON_TOL
    nbr = neighbor_codes(2)
    a = Pi[np.arange(4)[:, None], nbr]

    start = np.concatenate([np.full(4, 0.5), np.clip([2.0 * a[b, p] for b, p in _EDGES], clip, 1 - clip)])
    x = _newton(start, a, clip, tol)
    if x is None:
        logger.info('Newton recovery stalled; searching along the state cycle')
        seed = _cycle_search(a, clip)
        x = _newton(seed, a, clip, tol) if seed is not None else None
        if x is None and seed is not None:
            x = seed
    if x is None:
        raise RecoveryError('no admissible gamma reproduces the transition matrix')

    rho, F = _unpack(x)
    residual = float(np.max(np.abs(transition_from_primitives(rho, F) - Pi)))
    if residual > config.RECOVERY_RESIDUAL_TOL:
        raise RecoveryError(f'recovered gamma leaves residual {residual:.3e}')
    return GammaVector(2, rho, F)


@dataclass
class ProbeDesign:
    """
    Meeting exponents and toggle gains of every (state, pair) of a small chain.

    Probes add an instrument loading t * load to either array and rebuild the chain.
    """
    n_agents: int
    meeting_logits: np.ndarray
    gains: np.ndarray

    @classmethod
    def from_model(cls, X: CovariateSet, beta: ParamVector) -> 'ProbeDesign':
        n = X.n_agents
        rows, cols = off_diagonal_pairs(n)
        states = all_states(n).astype(float)
        beta_arr = np.broadcast_to(beta.to_array(), (states.shape[0], ParamVector.dim(X.n_covariates)))
        logits = meeting_logits_batch(states, X, beta_arr)[:, rows, cols]
        c_direct, c_mutual, c_indirect = coefficient_maps(X, beta)
        marginal = marginal_gains_batch(states, c_direct, c_mutual, c_indirect)[:, rows, cols]
        gains = np.where(state_bits(n).astype(bool), -marginal, marginal)
        return cls(n, logits, gains)

    def rho(self, extra_logits: Optional[np.ndarray] = None) -> np.ndarray:
        logits = self.meeting_logits if extra_logits is None else self.meeting_logits + extra_logits
        return softmax(logits, axis=1)

    def flip(self, extra_gain: Optional[np.ndarray] = None) -> np.ndarray:
        gains = self.gains if extra_gain is None else self.gains + extra_gain
        return expit(gains)

    def transition(self, extra_gain: Optional[np.ndarray] = None,
                   extra_logits: Optional[np.ndarray] = None) -> np.ndarray:
        gains = self.gains if extra_gain is None else self.gains + extra_gain
        return transition_from_primitives(self.rho(extra_logits), expit(gains), expit(-gains))


@dataclass
class ProbeRow:
    t: float
    estimate: float
    target: float
    gap: float
    complement_gap: Optional[float] = None


def geometric_path(doublings: Optional[int] = None) -> List[float]:
    """Instrument values 1, 2, 4, ..., 2^k."""
    k = config.PROBE_PATH_DOUBLINGS if doublings is None else doublings
    return [float(2 ** e) for e in range(k + 1)]


def _exit_loading(design: ProbeDesign, state: int, skip_pair: Optional[int]) -> np.ndarray:
    """Loading pushing every move out of state (except skip_pair) toward rejection."""
    m = n_pairs(design.n_agents)
    load = np.zeros_like(design.gains)
    for q in range(m):
        if q == skip_pair:
            continue
        load[state, q] -= 1.0
        load[state ^ (1 << q), q] += 1.0
    return load


def rho_probe_loading(design: ProbeDesign, g: int, pair: int) -> np.ndarray:
    """Instrument direction: the move g -> w is favoured, every other exit from g and w is not."""
    w = g ^ (1 << pair)
    load = _exit_loading(design, g, pair) + _exit_loading(design, w, pair)
    load[g, pair] = 1.0
    load[w, pair] = -1.0
    return load


def f_probe_loading(design: ProbeDesign, g: int, pair: int) -> np.ndarray:
    """Instrument direction leaving the g <-> w toggle untouched and closing all other exits."""
    w = g ^ (1 << pair)
    return _exit_loading(design, g, pair) + _exit_loading(design, w, pair)


def _check_probe_args(design: ProbeDesign, g: int, pair: int, tau: int) -> None:
    m = n_pairs(design.n_agents)
    if not 0 <= g < 2 ** m or not 0 <= pair < m:
        raise ConfigurationError(f'state {g} or pair {pair} outside the chain')
    if tau < 1:
        raise ConfigurationError('tau must be at least 1')


def _mark_convergence(rows: List[ProbeRow]) -> None:
    for prev, cur in zip(rows, rows[1:]):
        if abs(cur.estimate - prev.estimate) < config.PROBE_CONVERGENCE_TOL:
            logger.debug(f'Probe estimate settled by t={cur.t:g}')
            return


def limit_probe_rho(design: ProbeDesign, g: int, pair: int, tau: int,
                    instrument_path: Optional[Sequence[float]] = None) -> List[ProbeRow]:
    """
    Estimate rho_pair(g) as 1 - ((Pi^tau)_gg)^(1/tau) along an instrument path.

    Returns:
        One ProbeRow per instrument value
    """
    _check_probe_args(design, g, pair, tau)
    path = geometric_path() if instrument_path is None else list(instrument_path)
    load = rho_probe_loading(design, g, pair)
    target = float(design.rho()[g, pair])
    rows = []
    for t in path:
        power = matrix_power(design.transition(extra_gain=t * load), tau)
        estimate = 1.0 - power[g, g] ** (1.0 / tau)
        rows.append(ProbeRow(t=float(t), estimate=float(estimate), target=target, gap=abs(estimate - target)))
    _mark_convergence(rows)
    return rows


def two_state_limit(F: float, rho_g: float, rho_w: float, tau: int) -> float:
    """(Pi^tau)_gw of the chain confined to {g, w} with toggle probability F out of g."""
    gw = rho_g * F
    for _ in range(tau - 1):
        gw = (1.0 - gw) * rho_g * F + gw * (1.0 - rho_w * (1.0 - F))
    return gw


def limit_probe_F(design: ProbeDesign, g: int, pair: int, tau: int,
                  instrument_path: Optional[Sequence[float]] = None) -> List[ProbeRow]:
    """
    Recover F_pair(g, w) by closing every other exit from g and w.

    The limiting (Pi^tau)_gw is inverted through the two-state recursion using
    meeting probabilities recovered by limit_probe_rho at the largest instrument value.

    Raises:
        RecoveryError: when the observed entry lies outside the recursion's range
    """
    _check_probe_args(design, g, pair, tau)
    path = geometric_path() if instrument_path is None else list(instrument_path)
    w = g ^ (1 << pair)
    t_max = max(path)
    rho_g = limit_probe_rho(design, g, pair, tau, [t_max])[0].estimate
    rho_w = limit_probe_rho(design, w, pair, tau, [t_max])[0].estimate
    load = f_probe_loading(design, g, pair)
    target = float(design.flip()[g, pair])

    rows = []
    for t in path:
        power = matrix_power(design.transition(extra_gain=t * load), tau)
        observed = float(power[g, w])
        complement = abs(power[g, w] + power[g, g] - 1.0)
        upper = two_state_limit(1.0, rho_g, rho_w, tau)
        if observed <= 0.0 or observed >= upper:
            if observed - upper > config.RECOVERY_RESIDUAL_TOL or observed < 0.0:
                raise RecoveryError(f'(Pi^tau)_gw = {observed:.6g} outside the attainable range (0, {upper:.6g})')
            estimate = 1.0 if observed >= upper else 0.0
        else:
            estimate = brentq(lambda f: two_state_limit(f, rho_g, rho_w, tau) - observed, 0.0, 1.0, xtol=1e-14)
        rows.append(ProbeRow(t=float(t), estimate=float(estimate), target=target,
                             gap=abs(estimate - target), complement_gap=float(complement)))
    _mark_convergence(rows)
    return rows


def limit_probe_matching(design: ProbeDesign, g: int, pair: int, tau: int,
                         instrument_path: Optional[Sequence[float]] = None) -> List[ProbeRow]:
    """
    Instrument entering only the meeting exponent of the pair at g and w.

    As t grows the pair is met almost surely from both states and
    (Pi^tau)_gw approaches F_pair(g, w).
    """
    _check_probe_args(design, g, pair, tau)
    path = geometric_path() if instrument_path is None else list(instrument_path)
    w = g ^ (1 << pair)
    target = float(design.flip()[g, pair])
    loading = np.zeros_like(design.meeting_logits)
    loading[g, pair] = 1.0
    loading[w, pair] = 1.0
    rows = []
    for t in path:
        power = matrix_power(design.transition(extra_logits=t * loading), tau)
        estimate = float(power[g, w])
        rows.append(ProbeRow(t=float(t), estimate=estimate, target=target, gap=abs(estimate - target),
                             complement_gap=float(abs(power[g, w] + power[g, g] - 1.0))))
    _mark_convergence(rows)
    return rows


def probe_report(rows: Sequence[ProbeRow]) -> Dict[str, list]:
    """Table of path value, estimate, target and gap."""
    return {
        'headers': ['t', 'estimate', 'target', 'gap', 'complement_gap'],
        'rows': [[r.t, r.estimate, r.target, r.gap, '' if r.complement_gap is None else r.complement_gap]
                 for r in rows],
    }


def nonident_construct(pi0: np.ndarray, rho_choice: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Chain with every agent's utility equal to ln pi0 and the given meetings.

    Whatever the meeting probabilities (as long as they ignore the met pair's
    own link), the chain's stationary law is pi0.

    Args:
        pi0: Strictly positive law over state codes
        rho_choice: (P,) pair weights, or (S, P) meeting probabilities invariant to the met pair's link

    Returns:
        (transition matrix, stationary distribution by power iteration)
    """
    pi0 = np.asarray(pi0, dtype=float)
    if np.any(pi0 <= 0):
        raise ConfigurationError('target law must be strictly positive')
    pi0 = pi0 / pi0.sum()
    m = int(round(np.log2(pi0.shape[0])))
    n_agents = int(round((1 + np.sqrt(1 + 4 * m)) / 2))
    if 2 ** m != pi0.shape[0] or n_pairs(n_agents) != m:
        raise ConfigurationError(f'{pi0.shape[0]} states do not correspond to a classroom size')

    rho = np.asarray(rho_choice, dtype=float)
    if rho.ndim == 1:
        rho = np.broadcast_to(rho / rho.sum(), (pi0.shape[0], m)).copy()
    nbr = neighbor_codes(n_agents)
    if rho.shape != (pi0.shape[0], m) or np.any(rho <= 0):
        raise ConfigurationError('meeting probabilities must be positive with one column per pair')
    rho = rho / rho.sum(axis=1, keepdims=True)
    if np.max(np.abs(rho - rho[nbr, np.arange(m)[None, :]])) > _CHECK_TOL:
        raise ConfigurationError("meeting probabilities must not depend on the met pair's own link")

    log_pi = np.log(pi0)
    gains = log_pi[nbr] - log_pi[:, None]
    Pi = transition_from_primitives(rho, expit(gains), expit(-gains))
    return Pi, stationary(Pi)
