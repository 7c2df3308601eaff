"""
Synthetic panels drawn from the game itself, for simulation studies and demos.
"""
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import config
from components.covariates import build_covariates
from components.errors import ConfigurationError
from components.helpers import make_generator, write_json
from components.logger import get_logger
from components.model import Network, ParamVector, ShockFamily, ShockSpec
from components.panel import NetworkObservation, NetworkPanel
from components.panel_io import save_panel
from components.simulator import simulate_batch

logger = get_logger(__name__)

_ATTRIBUTE_STREAM, _BASELINE_STREAM, _FOLLOWUP_STREAM = 0, 1, 2
BASELINE_LAWS = ('empty', 'bernoulli', 'burn_in')


def _default_attributes() -> Dict[str, Dict[str, Any]]:
    return {
        'gender': {'kind': 'bernoulli', 'p': 0.5},
        'cognitive_skills': {'kind': 'normal', 'mean': 0.0, 'sd': 1.0},
    }


@dataclass
class GeneratorSpec:
    """
    Recipe for a synthetic panel.

    attributes maps a column name to a distribution: bernoulli (p), normal
    (mean, sd) or integer (low, high inclusive). beta is the flat coefficient
    vector; None draws nothing and uses zeros.
    """
    n_classrooms: int = 10
    n_agents: Tuple[int, int] = (4, 4)
    attributes: Dict[str, Dict[str, Any]] = field(default_factory=_default_attributes)
    beta: Optional[List[float]] = None
    tau: int = 10
    baseline: str = 'empty'
    baseline_p: float = 0.1
    burn_in_rounds: int = 0
    classrooms_per_grade: int = 2
    shock_family: str = ShockFamily.LOGISTIC.value

    def __post_init__(self):
        self.n_agents = tuple(int(v) for v in self.n_agents)
        if self.n_classrooms < 1:
            raise ConfigurationError('at least one classroom is required')
        if len(self.n_agents) != 2 or not 2 <= self.n_agents[0] <= self.n_agents[1]:
            raise ConfigurationError('n_agents must be a range (low, high) with 2 <= low <= high')
        if self.baseline not in BASELINE_LAWS:
            raise ConfigurationError(f'baseline law must be one of {BASELINE_LAWS}')
        if not 0 <= self.baseline_p <= 1:
            raise ConfigurationError('baseline_p must lie in [0, 1]')
        if self.tau < 0 or self.burn_in_rounds < 0:
            raise ConfigurationError('round counts must be nonnegative')
        for name, law in self.attributes.items():
            if law.get('kind') not in ('bernoulli', 'normal', 'integer'):
                raise ConfigurationError(f'attribute {name}: unknown distribution {law.get("kind")!r}')
        if self.beta is not None and len(self.beta) != ParamVector.dim(len(self.attributes)):
            raise ConfigurationError(f'beta has {len(self.beta)} entries, '
                                     f'{ParamVector.dim(len(self.attributes))} expected')

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GeneratorSpec':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f'unknown generator keys {sorted(unknown)}')
        return cls(**data)

    def coefficients(self) -> ParamVector:
        k = len(self.attributes)
        if self.beta is None:
            return ParamVector.zeros(k)
        return ParamVector.from_array(self.beta, k)


def _draw_attribute(law: Dict[str, Any], size: int, rng: np.random.Generator) -> np.ndarray:
    if law['kind'] == 'bernoulli':
        return (rng.random(size) < law.get('p', 0.5)).astype(int)
    if law['kind'] == 'normal':
        return rng.normal(law.get('mean', 0.0), law.get('sd', 1.0), size)
    return rng.integers(law.get('low', 0), law.get('high', 1) + 1, size)


def _draw_agents(spec: GeneratorSpec, c: int, rng: np.random.Generator) -> pd.DataFrame:
    low, high = spec.n_agents
    n = int(rng.integers(low, high + 1))
    table = pd.DataFrame({
        'classroom_id': f'c{c:03d}',
        'agent_id': [str(i + 1) for i in range(n)],
        'school': f's{c // (2 * spec.classrooms_per_grade):03d}',
        'grade': f'g{(c // spec.classrooms_per_grade) % 2 + 1}',
        config.ORDERING_COLUMN: rng.permutation(n) + 1,
    })
    for name, law in spec.attributes.items():
        table[name] = _draw_attribute(law, n, rng)
    return table


def synthesize_panel(spec: GeneratorSpec, seed: int) -> NetworkPanel:
    """
    Draw a panel: covariates, a baseline network from the chosen law, and a
    follow-up after spec.tau rounds of the game.

    Classroom c draws from the streams (seed, c, k), so classrooms do not
    depend on each other.
    """
    beta = spec.coefficients()
    shocks = ShockSpec(ShockFamily(spec.shock_family))
    observations = []
    for c in range(spec.n_classrooms):
        agents = _draw_agents(spec, c, make_generator(seed, c, _ATTRIBUTE_STREAM))
        X = build_covariates(agents, attributes=list(spec.attributes))
        n = X.n_agents

        rng = make_generator(seed, c, _BASELINE_STREAM)
        g0 = np.zeros((n, n), dtype=np.int8)
        if spec.baseline == 'bernoulli':
            g0 = (rng.random((n, n)) < spec.baseline_p).astype(np.int8)
            np.fill_diagonal(g0, 0)
        elif spec.baseline == 'burn_in':
            g0 = simulate_batch(g0, X, beta, spec.burn_in_rounds, rng, shocks).final[0]

        g1 = simulate_batch(g0, X, beta, spec.tau, make_generator(seed, c, _FOLLOWUP_STREAM), shocks).final[0]
        observations.append(NetworkObservation(
            agents['classroom_id'].iloc[0], Network(g0), Network(g1), X,
            agents['school'].iloc[0], agents['grade'].iloc[0]))
    return NetworkPanel(observations)


def generate_synthetic(spec: GeneratorSpec, seed: int, out_dir: str) -> Dict[str, str]:
    """
    Write networks.csv, covariates.csv and truth.json for a synthetic panel.

    Returns:
        Paths of the written files by role
    """
    panel = synthesize_panel(spec, seed)
    paths = {
        'networks': os.path.join(out_dir, 'networks.csv'),
        'covariates': os.path.join(out_dir, 'covariates.csv'),
        'truth': os.path.join(out_dir, 'truth.json'),
    }
    save_panel(panel, paths['networks'], paths['covariates'])
    beta = spec.coefficients()
    write_json(paths['truth'], {
        'seed': seed,
        'tau': spec.tau,
        'beta': beta.to_array(),
        'names': ParamVector.names(panel.covariate_names),
        'generator': asdict(spec),
    })
    logger.info(f'Generated {spec.n_classrooms} synthetic classrooms in {out_dir}')
    return paths
