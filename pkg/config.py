"""
Configuration settings for the network-formation estimation toolkit.
Centralizes all constants and numerical defaults.
"""
from dataclasses import dataclass, field
from typing import Dict, Set, Tuple
import os

@dataclass
class Config:
    # Application settings
    SECRET_KEY: str = field(default_factory=lambda: os.environ.get('FLASK_SECRET_KEY', ''))
    UPLOAD_FOLDER: str = field(default_factory=lambda: os.environ.get('NETFORM_UPLOAD_FOLDER', 'uploads'))
    MAX_UPLOAD_SIZE: int = 50 * 1024 * 1024  # 50 MB
    UPLOAD_TTL_HOURS: int = 24
    ALLOWED_EXT: Set[str] = field(default_factory=lambda: {'.csv'})

    # Game simulation
    SIMULATION_CHUNK_SIZE: int = 2048  # draws per seeded chunk
    N_JOBS: int = 1

    # Exact chain
    MAX_EXACT_PAIRS: int = 12  # N(N-1) <= 12, i.e. at most 4096 states
    STATIONARY_TOL: float = 1e-12
    STATIONARY_MAX_ITER: int = 1_000_000

    # Identification probes
    RECOVERY_NEWTON_TOL: float = 1e-13
    RECOVERY_RESIDUAL_TOL: float = 1e-10
    RECOVERY_CLIP: float = 1e-9
    PROBE_CONVERGENCE_TOL: float = 1e-6
    PROBE_PATH_DOUBLINGS: int = 5  # t in {1, 2, 4, ..., 2^k}

    # Likelihood
    NODE_BUDGET: int = 10_000_000

    # Priors and ABC
    PRIOR_SD: float = 2.0
    ABC_DRAWS: int = 100_000
    ABC_PILOT_DRAWS: int = 10_000
    TARGET_ACCEPTANCE: float = 0.01

    # EP-ABC
    EP_DRAWS_PER_SITE: int = 100_000
    EP_STUDY_DRAWS_PER_SITE: int = 10_000
    EP_MIN_ACCEPTED: int = 20
    EP_JITTER: float = 1e-8  # scaled by trace/dim
    EP_TOLERANCE: float = 1e-3
    EP_PASSES: int = 1

    # Local summaries (post-Lasso)
    LOCAL_SUMMARY_DRAWS: int = 100_000
    PLUGIN_PENALTY_C: float = 1.1
    PLUGIN_PENALTY_GAMMA: float = 0.05

    # Counterfactuals
    COUNTERFACTUAL_SIMULATIONS: int = 1000
    TRACKING_KEY: str = 'cognitive_skills'
    WELFARE_GENDER_COVARIATE: str = 'gender'

    # Dyadic regression
    FE_TOLERANCE: float = 1e-12
    FE_MAX_ITER: int = 10_000
    SIGNIFICANCE_STARS: Tuple[Tuple[float, str], ...] = ((0.01, '***'), (0.05, '**'), (0.1, '*'))

    # Panel files
    PERIODS: Tuple[str, str] = ('T0', 'T1')
    ORDERING_COLUMN: str = 'class_list_position'
    CATEGORICAL_ATTRIBUTES: Set[str] = field(default_factory=lambda: {'gender'})
    RESERVED_COLUMNS: Set[str] = field(default_factory=lambda: {
        'classroom_id', 'agent_id', 'school', 'grade', 'class_list_position'
    })

    # Reference values from the school application
    REFERENCE_TAU_HAT: int = 76

    # CLI exit codes per failure category
    EXIT_CODES: Dict[str, int] = field(default_factory=lambda: {
        'parse': 2,
        'config': 3,
        'capacity': 4,
        'numeric': 5,
        'tolerance': 6,
    })

# Create a singleton instance
config = Config()
