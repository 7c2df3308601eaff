"""
Value types and parametrized primitives of the network-formation game:
networks, covariates, coefficient vectors, utilities, meeting probabilities
and the acceptance probability of a proposed link.

Agents are indexed from 0. Ordered pairs are enumerated row-major with the
diagonal skipped: (0,1), (0,2), ..., (1,0), (1,2), ...
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, softmax

from components.errors import ConfigurationError

BLOCKS = ('matching', 'direct', 'mutual', 'indirect_popularity')
UTILITY_TERMS = ('direct', 'mutual', 'indirect', 'popularity')


@lru_cache(maxsize=None)
def off_diagonal_pairs(n_agents: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the N(N-1) ordered pairs, row-major, diagonal skipped."""
    rows, cols = np.nonzero(~np.eye(n_agents, dtype=bool))
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@dataclass(eq=False)
class Network:
    """Directed adjacency matrix g with g_ij = 1 when i names j."""
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges)
        if edges.ndim != 2 or edges.shape[0] != edges.shape[1]:
            raise ConfigurationError(f'adjacency matrix must be square, got shape {edges.shape}')
        if not np.isin(edges, (0, 1)).all():
            raise ConfigurationError('adjacency entries must be 0 or 1')
        if np.any(np.diag(edges) != 0):
            raise ConfigurationError('adjacency diagonal must be zero')
        self.edges = edges.astype(np.int8)

    @property
    def n_agents(self) -> int:
        return self.edges.shape[0]

    @classmethod
    def empty(cls, n_agents: int) -> 'Network':
        return cls(np.zeros((n_agents, n_agents), dtype=np.int8))

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_agents: int) -> 'Network':
        edges = np.zeros((n_agents, n_agents), dtype=np.int8)
        rows, cols = off_diagonal_pairs(n_agents)
        edges[rows, cols] = vec
        return cls(edges)

    def vector(self) -> np.ndarray:
        """Off-diagonal entries in pair order."""
        rows, cols = off_diagonal_pairs(self.n_agents)
        return self.edges[rows, cols]

    def with_edge(self, i: int, j: int, value: int) -> 'Network':
        edges = self.edges.copy()
        edges[i, j] = value
        return Network(edges)

    def n_edges(self) -> int:
        return int(self.edges.sum())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Network) and np.array_equal(self.edges, other.edges)

    def __repr__(self) -> str:
        return f'Network(n_agents={self.n_agents}, n_edges={self.n_edges()})'


@dataclass(eq=False)
class CovariateSet:
    """
    Exogenous pair attributes of one classroom.

    pair_covariates[i, j] is the length-k vector W_ij of attribute distances,
    instrument[i, j] the class-list distance Z_ij. Diagonal entries are unused
    and stored as zero. The raw agent table is kept when the set was built
    from attributes, so classrooms can be reassembled.
    """
    pair_covariates: np.ndarray
    instrument: np.ndarray
    covariate_names: Tuple[str, ...] = ()
    agents: Optional[pd.DataFrame] = None

    def __post_init__(self):
        W = np.asarray(self.pair_covariates, dtype=float)
        if W.ndim == 2:
            W = W[:, :, None]
        if W.ndim != 3 or W.shape[0] != W.shape[1]:
            raise ConfigurationError(f'pair covariates must have shape (N, N, k), got {W.shape}')
        Z = np.asarray(self.instrument, dtype=float)
        if Z.shape != W.shape[:2]:
            raise ConfigurationError(f'instrument shape {Z.shape} does not match {W.shape[:2]}')
        if not (np.isfinite(W).all() and np.isfinite(Z).all()):
            raise ConfigurationError('covariates must be finite')
        n = W.shape[0]
        W = W.copy()
        Z = Z.copy()
        W[np.arange(n), np.arange(n), :] = 0.0
        Z[np.arange(n), np.arange(n)] = 0.0
        self.pair_covariates = W
        self.instrument = Z
        if not self.covariate_names:
            self.covariate_names = tuple(f'w{idx}' for idx in range(W.shape[2]))
        elif len(self.covariate_names) != W.shape[2]:
            raise ConfigurationError(
                f'{len(self.covariate_names)} covariate names for {W.shape[2]} covariates')
        self.covariate_names = tuple(self.covariate_names)

    @property
    def n_agents(self) -> int:
        return self.pair_covariates.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.pair_covariates.shape[2]

    def is_symmetric(self) -> bool:
        W = self.pair_covariates
        return bool(np.allclose(W, W.transpose(1, 0, 2)) and np.allclose(self.instrument, self.instrument.T))


@dataclass(eq=False)
class ParamVector:
    """
    Matching and utility coefficients.

    The utility blocks each lead with an intercept. The indirect and popularity
    terms share one block.
    """
    matching: np.ndarray
    link_persistence: float
    instrument_slope: float
    direct: np.ndarray
    mutual: np.ndarray
    indirect_popularity: np.ndarray

    def __post_init__(self):
        self.matching = np.asarray(self.matching, dtype=float).reshape(-1)
        k = self.matching.shape[0]
        for name in ('direct', 'mutual', 'indirect_popularity'):
            block = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if block.shape[0] != k + 1:
                raise ConfigurationError(
                    f'{name} block has length {block.shape[0]}, expected {k + 1} for {k} covariates')
            setattr(self, name, block)
        self.link_persistence = float(self.link_persistence)
        self.instrument_slope = float(self.instrument_slope)
        if not np.isfinite(self.to_array()).all():
            raise ConfigurationError('coefficients must be finite')

    @property
    def n_covariates(self) -> int:
        return self.matching.shape[0]

    @staticmethod
    def dim(n_covariates: int) -> int:
        return 4 * n_covariates + 5

    @staticmethod
    def layout(n_covariates: int) -> Dict[str, slice]:
        """Slices of each block within the flat coefficient array."""
        k = n_covariates
        return {
            'matching': slice(0, k),
            'link_persistence': slice(k, k + 1),
            'instrument_slope': slice(k + 1, k + 2),
            'direct': slice(k + 2, 2 * k + 3),
            'mutual': slice(2 * k + 3, 3 * k + 4),
            'indirect_popularity': slice(3 * k + 4, 4 * k + 5),
        }

    def to_array(self) -> np.ndarray:
        return np.concatenate([
            self.matching, [self.link_persistence, self.instrument_slope],
            self.direct, self.mutual, self.indirect_popularity,
        ])

    @classmethod
    def from_array(cls, values: Sequence[float], n_covariates: int) -> 'ParamVector':
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape[0] != cls.dim(n_covariates):
            raise ConfigurationError(
                f'coefficient vector has length {values.shape[0]}, expected {cls.dim(n_covariates)}')
        lay = cls.layout(n_covariates)
        return cls(
            matching=values[lay['matching']],
            link_persistence=values[lay['link_persistence']][0],
            instrument_slope=values[lay['instrument_slope']][0],
            direct=values[lay['direct']],
            mutual=values[lay['mutual']],
            indirect_popularity=values[lay['indirect_popularity']],
        )

    @classmethod
    def zeros(cls, n_covariates: int) -> 'ParamVector':
        return cls.from_array(np.zeros(cls.dim(n_covariates)), n_covariates)

    @staticmethod
    def names(covariate_names: Sequence[str]) -> List[str]:
        """Human-readable coefficient labels in flat-array order."""
        cov = list(covariate_names)
        labels = [f'matching:{c}' for c in cov]
        labels += ['matching:link_persistence', 'matching:class_list']
        for block in ('direct', 'mutual', 'indirect_popularity'):
            labels += [f'{block}:intercept'] + [f'{block}:{c}' for c in cov]
        return labels

    def check_covariates(self, X: CovariateSet) -> None:
        if self.n_covariates != X.n_covariates:
            raise ConfigurationError(
                f'coefficients expect {self.n_covariates} pair covariates, covariate set has {X.n_covariates}')


class ShockFamily(str, Enum):
    LOGISTIC = 'logistic'
    INDEPENDENT_EV1 = 'independent_ev1'


@dataclass(frozen=True)
class ShockSpec:
    """
    Distribution of the taste-shock difference.

    Independent type-1 extreme value shocks have a logistic difference, so both
    families share one acceptance function.
    """
    family: ShockFamily = ShockFamily.LOGISTIC


@dataclass(frozen=True)
class SimConfig:
    n_rounds: int
    seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ConfigurationError('n_rounds must be nonnegative')
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError('seed must be an unsigned 64-bit integer')


def accept_prob(delta_u, shocks: ShockSpec = ShockSpec()):
    """
    Probability that the proposing agent holds the link given its utility gain.

    Computed with scipy's logistic, which saturates without overflow.
    """
    if shocks.family not in (ShockFamily.LOGISTIC, ShockFamily.INDEPENDENT_EV1):
        raise ConfigurationError(f'unsupported shock family {shocks.family}')
    return expit(delta_u)


def coefficient_maps(X: CovariateSet, beta: ParamVector) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pair coefficient matrices (direct, mutual, indirect/popularity).

    Each entry is the block's intercept plus its slopes on W_ij; diagonals are zero.
    """
    beta.check_covariates(X)
    maps = coefficient_maps_batch(X, beta.to_array()[None, :])
    return maps[0][0], maps[1][0], maps[2][0]


def coefficient_maps_batch(X: CovariateSet, betas: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched coefficient_maps for a (B, dim) array of coefficient vectors; each output is (B, N, N)."""
    lay = ParamVector.layout(X.n_covariates)
    W = X.pair_covariates
    off = 1.0 - np.eye(X.n_agents)
    out = []
    for name in ('direct', 'mutual', 'indirect_popularity'):
        block = betas[:, lay[name]]
        mat = block[:, 0, None, None] + np.einsum('ijk,bk->bij', W, block[:, 1:])
        out.append(mat * off)
    return out[0], out[1], out[2]


def meeting_logits_batch(g: np.ndarray, X: CovariateSet, betas: np.ndarray) -> np.ndarray:
    """
    Meeting exponents for networks g (B, N, N) under coefficients (B, dim).

    The instrument only enters for pairs not currently linked.
    """
    lay = ParamVector.layout(X.n_covariates)
    base = np.einsum('ijk,bk->bij', X.pair_covariates, betas[:, lay['matching']])
    delta0 = betas[:, lay['link_persistence']][:, :, None]
    delta1 = betas[:, lay['instrument_slope']][:, :, None]
    return base + delta0 * g + delta1 * (1.0 - g) * X.instrument[None]


def meeting_probs(g: Network, X: CovariateSet, beta: ParamVector) -> np.ndarray:
    """
    Probability that each ordered pair is selected, in pair order.

    Args:
        g: Current network
        X: Covariates
        beta: Coefficients

    Returns:
        Vector of length N(N-1) summing to one
    """
    beta.check_covariates(X)
    logits = meeting_logits_batch(g.edges[None].astype(float), X, beta.to_array()[None, :])[0]
    rows, cols = off_diagonal_pairs(g.n_agents)
    return softmax(logits[rows, cols])


def utility_components_batch(G: np.ndarray, c_direct: np.ndarray, c_mutual: np.ndarray,
                             c_indirect: np.ndarray) -> np.ndarray:
    """
    Per-agent utility terms for a batch of networks.

    Args:
        G: (B, N, N) adjacency matrices as floats
        c_direct, c_mutual, c_indirect: (B, N, N) or (N, N) coefficient maps

    Returns:
        (B, N, 4) array of direct, mutual, indirect and popularity terms
    """
    Gt = np.swapaxes(G, -1, -2)
    direct = (c_direct * G).sum(-1)
    mutual = (c_mutual * G * Gt).sum(-1)
    # i -> k -> l for l != i
    indirect = ((G @ G) * c_indirect).sum(-1)
    # i -> k and l -> i for l != k, valued at c[k, l]
    popularity = (G * np.swapaxes(c_indirect @ G, -1, -2)).sum(-1)
    return np.stack([direct, mutual, indirect, popularity], axis=-1)


def utility_components(g: Network, X: CovariateSet, beta: ParamVector) -> np.ndarray:
    """(N, 4) per-agent direct, mutual, indirect and popularity terms."""
    c_direct, c_mutual, c_indirect = coefficient_maps(X, beta)
    return utility_components_batch(g.edges[None].astype(float), c_direct, c_mutual, c_indirect)[0]


def utility(agent: int, g: Network, X: CovariateSet, beta: ParamVector) -> float:
    """Utility of one agent at network g."""
    if not 0 <= agent < g.n_agents:
        raise ConfigurationError(f'agent {agent} outside 0..{g.n_agents - 1}')
    return float(utility_components(g, X, beta)[agent].sum())


def marginal_gains_batch(G: np.ndarray, c_direct: np.ndarray, c_mutual: np.ndarray,
                         c_indirect: np.ndarray) -> np.ndarray:
    """
    Gain of every sender i from holding the link to j, for all pairs at once.

    The gain does not depend on g_ij itself. Returns (B, N, N); diagonal is meaningless.
    """
    Gt = np.swapaxes(G, -1, -2)
    return (c_direct + c_mutual * Gt + c_indirect @ Gt
            + np.swapaxes(c_indirect @ G, -1, -2))


def pair_gain(i: int, j: int, G: np.ndarray, c_direct: np.ndarray, c_mutual: np.ndarray,
              c_indirect: np.ndarray) -> float:
    """Gain of i from the link to j in O(N) given precomputed coefficient maps."""
    return float(c_direct[i, j] + c_mutual[i, j] * G[j, i]
                 + c_indirect[i, :] @ G[j, :] + c_indirect[j, :] @ G[:, i])


def marginal_utility(pair: Tuple[int, int], g: Network, X: CovariateSet, beta: ParamVector) -> float:
    """
    u_i with g_ij = 1 minus u_i with g_ij = 0, holding the rest of g fixed.

    Args:
        pair: Ordered pair (i, j), i != j
        g: Network
        X: Covariates
        beta: Coefficients

    Returns:
        Utility gain of agent i
    """
    i, j = pair
    if i == j:
        raise ConfigurationError('marginal utility needs two distinct agents')
    c_direct, c_mutual, c_indirect = coefficient_maps(X, beta)
    return pair_gain(i, j, g.edges.astype(float), c_direct, c_mutual, c_indirect)


def potential(g: Network, X: CovariateSet, beta: ParamVector) -> float:
    """
    Network potential whose differences equal every marginal utility.

    Only a potential when the mutual and indirect coefficient maps are
    symmetric, which holds for distance covariates.
    """
    terms = utility_components(g, X, beta)
    return float(terms[:, 0].sum() + 0.5 * terms[:, 1].sum() + terms[:, 2].sum())
