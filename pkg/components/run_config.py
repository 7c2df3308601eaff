"""
Per-run configuration and the manifest written next to every result.
"""
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import config
from components.errors import ConfigurationError
from components.helpers import file_digest, write_json
from components.logger import get_logger
from components.model import ParamVector, ShockFamily, ShockSpec
from components.panel import NetworkPanel
from components.priors import PriorSpec
from components.tau_estimator import estimate_tau

logger = get_logger(__name__)

ENGINES = ('abc', 'ep', 'ep-local')
TAU_SOURCES = ('fixed', 'estimate')
PACKAGE_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'package.json')


def package_version() -> str:
    try:
        with open(PACKAGE_FILE, encoding='utf-8') as f:
            return json.load(f).get('version', 'unknown')
    except (FileNotFoundError, json.JSONDecodeError):
        return 'unknown'


@dataclass
class RunConfig:
    """
    Settings of one command-line run.

    prior_fixed pins coefficients by name, e.g. {"mutual:intercept": 0.0}.
    Engine budgets left as None fall back to the defaults in config.py.
    """
    networks: Optional[str] = None
    covariates: Optional[str] = None
    output_dir: str = 'results'
    seed: int = 0
    shock_family: str = ShockFamily.LOGISTIC.value
    tau_source: str = 'fixed'
    tau: Optional[int] = None
    engine: str = 'abc'
    attributes: Optional[List[str]] = None
    categorical: Optional[List[str]] = None
    prior_sd: float = field(default_factory=lambda: config.PRIOR_SD)
    prior_mean: Optional[List[float]] = None
    prior_fixed: Dict[str, float] = field(default_factory=dict)
    halton: bool = False
    n_jobs: int = field(default_factory=lambda: config.N_JOBS)
    # ABC
    abc_draws: Optional[int] = None
    abc_pilot_draws: Optional[int] = None
    epsilon: Optional[float] = None
    target_acceptance: float = field(default_factory=lambda: config.TARGET_ACCEPTANCE)
    kernel: str = 'sharp'
    statistic: str = 'full_panel'
    # EP
    ep_passes: Optional[int] = None
    ep_draws_per_site: Optional[int] = None
    ep_tolerance: Optional[float] = None
    ep_min_accepted: Optional[int] = None
    local_summary_draws: Optional[int] = None
    local_penalty: Optional[float] = None
    # Counterfactuals
    scenarios: List[str] = field(default_factory=lambda: ['base', 'random_matching', 'tracking', 'random_friendship'])
    n_simulations: int = field(default_factory=lambda: config.COUNTERFACTUAL_SIMULATIONS)
    tracking_key: str = field(default_factory=lambda: config.TRACKING_KEY)
    common_random_numbers: bool = True

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigurationError(f'engine must be one of {ENGINES}, got {self.engine!r}')
        if self.tau_source not in TAU_SOURCES:
            raise ConfigurationError(f'tau_source must be one of {TAU_SOURCES}, got {self.tau_source!r}')
        if self.tau is not None and self.tau < 0:
            raise ConfigurationError('tau must be nonnegative')
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError('seed must be an unsigned 64-bit integer')
        try:
            ShockFamily(self.shock_family)
        except ValueError as e:
            raise ConfigurationError(f'unknown shock family {self.shock_family!r}') from e

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f'unknown configuration keys {unknown}')
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> 'RunConfig':
        try:
            with open(path, encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigurationError(f'configuration file {path} does not exist') from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f'{path}: invalid JSON ({e})') from e
        if not isinstance(data, dict):
            raise ConfigurationError(f'{path}: expected a JSON object')
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> 'RunConfig':
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def resolved(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def shocks(self) -> ShockSpec:
        return ShockSpec(ShockFamily(self.shock_family))

    def prior(self, covariate_names: Sequence[str], tau: Optional[int] = None) -> PriorSpec:
        dim = ParamVector.dim(len(covariate_names))
        names = ParamVector.names(covariate_names)
        mean = np.zeros(dim) if self.prior_mean is None else np.asarray(self.prior_mean, dtype=float)
        if mean.shape != (dim,):
            raise ConfigurationError(f'prior_mean has {mean.shape[0]} entries, {dim} expected')
        prior = PriorSpec(mean, np.full(dim, self.prior_sd), tau=tau)
        unknown = sorted(set(self.prior_fixed) - set(names))
        if unknown:
            raise ConfigurationError(f'prior_fixed names unknown coefficients {unknown}; known: {names}')
        return prior.pin({names.index(name): value for name, value in self.prior_fixed.items()})

    def resolve_tau(self, panel: NetworkPanel) -> int:
        if self.tau_source == 'estimate':
            return estimate_tau(panel).tau_hat
        if self.tau is None:
            raise ConfigurationError('tau_source is fixed but no tau was given')
        return int(self.tau)


def write_manifest(out_dir: str, command: str, run_config: Optional[RunConfig], seed: int,
                   inputs: Sequence[str] = (), extra: Optional[Dict[str, Any]] = None) -> str:
    """
    Write manifest.json: command, resolved configuration, seed, code version
    and SHA-256 digests of the inputs. No timestamps, so reruns are identical.
    """
    manifest = {
        'command': command,
        'config': run_config.resolved() if run_config is not None else {},
        'seed': seed,
        'version': package_version(),
        'inputs': {os.path.basename(path): file_digest(path) for path in inputs if path},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, 'manifest.json')
    write_json(path, manifest)
    logger.info(f'Wrote manifest to {path}')
    return path
