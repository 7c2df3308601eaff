"""
First-step estimate of the number of rounds between the two panel snapshots.
"""
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from components.errors import ConfigurationError
from components.logger import get_logger
from components.model import Network
from components.panel import NetworkPanel

logger = get_logger(__name__)


@dataclass
class TauEstimate:
    tau_hat: int
    bound_violations: List[str] = field(default_factory=list)
    distances: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'tau_hat': self.tau_hat,
            'bound_violations': list(self.bound_violations),
            'distances': dict(self.distances),
        }


def edge_distance(g0: Network, g1: Network) -> int:
    """Number of ordered pairs whose link status differs."""
    if g0.edges.shape != g1.edges.shape:
        raise ConfigurationError(f'cannot compare networks of shapes {g0.edges.shape} and {g1.edges.shape}')
    return int(np.count_nonzero(g0.edges != g1.edges))


def estimate_tau(panel: NetworkPanel) -> TauEstimate:
    """
    Largest edge distance between baseline and follow-up across the panel.

    Each round changes at most one link, so the largest observed change bounds
    the number of rounds from below and converges to it as classrooms accrue.
    Networks whose pair count N(N-1) is below the estimate are reported, not
    clipped.

    Args:
        panel: Nonempty panel

    Returns:
        TauEstimate with the estimate, violating network ids and per-network distances
    """
    if len(panel) == 0:
        raise ConfigurationError('cannot estimate the number of rounds from an empty panel')
    distances = {obs.network_id: edge_distance(obs.baseline, obs.followup) for obs in panel}
    tau_hat = max(distances.values())
    violations = [obs.network_id for obs in panel if tau_hat > obs.n_agents * (obs.n_agents - 1)]
    logger.info(f'Estimated {tau_hat} rounds from {len(panel)} networks')
    if violations:
        logger.warning(f'{len(violations)} of {len(panel)} networks have fewer ordered pairs than '
                       f'{tau_hat} rounds: {", ".join(violations[:10])}')
    if len(violations) == len(panel):
        logger.warning('The estimate exceeds N(N-1) in every network; the round bound fails throughout')
    return TauEstimate(tau_hat=tau_hat, bound_violations=violations, distances=distances)


def tau_distance_table(panel: NetworkPanel, tau_hat: int) -> Dict[str, list]:
    """Per-network distance, pair count and bound flag."""
    rows = []
    for obs in panel:
        pairs = obs.n_agents * (obs.n_agents - 1)
        rows.append([obs.network_id, obs.n_agents, pairs,
                     edge_distance(obs.baseline, obs.followup), int(tau_hat > pairs)])
    return {'headers': ['network_id', 'n_agents', 'n_pairs', 'edge_distance', 'bound_violation'], 'rows': rows}
