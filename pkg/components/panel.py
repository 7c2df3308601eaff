"""
Panel of classroom networks observed at a baseline and a follow-up period.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from components.errors import ConfigurationError
from components.model import CovariateSet, Network


@dataclass(eq=False)
class NetworkObservation:
    """One classroom: baseline and follow-up networks plus covariates."""
    network_id: str
    baseline: Network
    followup: Network
    covariates: CovariateSet
    school: Optional[str] = None
    grade: Optional[str] = None

    def __post_init__(self):
        n = self.baseline.n_agents
        if self.followup.n_agents != n:
            raise ConfigurationError(
                f'network {self.network_id}: baseline has {n} agents, follow-up {self.followup.n_agents}')
        if self.covariates.n_agents != n:
            raise ConfigurationError(
                f'network {self.network_id}: covariates cover {self.covariates.n_agents} agents, networks {n}')
        self.network_id = str(self.network_id)

    @property
    def n_agents(self) -> int:
        return self.baseline.n_agents


@dataclass(eq=False)
class NetworkPanel:
    observations: List[NetworkObservation] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for obs in self.observations:
            if obs.network_id in seen:
                raise ConfigurationError(f'duplicate network id {obs.network_id}')
            seen.add(obs.network_id)
        self._check_covariate_names()

    def _check_covariate_names(self) -> None:
        names = {obs.covariates.covariate_names for obs in self.observations}
        if len(names) > 1:
            raise ConfigurationError(f'networks disagree on pair covariates: {sorted(names)}')

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self) -> Iterator[NetworkObservation]:
        return iter(self.observations)

    def __getitem__(self, index: int) -> NetworkObservation:
        return self.observations[index]

    def append(self, observation: NetworkObservation) -> None:
        if any(obs.network_id == observation.network_id for obs in self.observations):
            raise ConfigurationError(f'duplicate network id {observation.network_id}')
        self.observations.append(observation)
        self._check_covariate_names()

    @property
    def network_ids(self) -> List[str]:
        return [obs.network_id for obs in self.observations]

    @property
    def covariate_names(self) -> Tuple[str, ...]:
        return self.observations[0].covariates.covariate_names if self.observations else ()

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    @property
    def n_students(self) -> int:
        return sum(obs.n_agents for obs in self.observations)

    def with_followups(self, followups: List[Network]) -> 'NetworkPanel':
        """Copy of the panel with replaced follow-up networks."""
        if len(followups) != len(self.observations):
            raise ConfigurationError('one follow-up network per observation is required')
        return NetworkPanel([
            NetworkObservation(obs.network_id, obs.baseline, followup, obs.covariates, obs.school, obs.grade)
            for obs, followup in zip(self.observations, followups)
        ])

    def groups(self) -> Dict[Tuple[Optional[str], Optional[str]], List[int]]:
        """Observation indices per (school, grade), in panel order."""
        out: Dict[Tuple[Optional[str], Optional[str]], List[int]] = {}
        for idx, obs in enumerate(self.observations):
            out.setdefault((obs.school, obs.grade), []).append(idx)
        return out

    def observed_vector(self) -> np.ndarray:
        """Stacked off-diagonal follow-up edges of all networks."""
        if not self.observations:
            return np.zeros(0, dtype=np.int8)
        return np.concatenate([obs.followup.vector() for obs in self.observations])
