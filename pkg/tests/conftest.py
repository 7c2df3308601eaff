import numpy as np
import pandas as pd
import pytest

from components.covariates import build_covariates
from components.model import CovariateSet, Network, ParamVector
from components.panel import NetworkObservation, NetworkPanel
from components.synthetic import GeneratorSpec, synthesize_panel


def make_covariates(n_agents, n_covariates=1, seed=0, symmetric=True):
    """Random pair covariates and a class-list instrument for n_agents."""
    rng = np.random.default_rng(seed)
    if symmetric:
        attrs = rng.normal(size=(n_agents, n_covariates))
        W = np.abs(attrs[:, None, :] - attrs[None, :, :])
    else:
        W = rng.normal(size=(n_agents, n_agents, n_covariates))
    positions = np.arange(n_agents, dtype=float)
    Z = np.abs(positions[:, None] - positions[None, :])
    return CovariateSet(W, Z)


def random_beta(n_covariates=1, seed=0, scale=1.0, link_dependent=True):
    rng = np.random.default_rng(seed)
    beta = ParamVector.from_array(rng.normal(scale=scale, size=ParamVector.dim(n_covariates)), n_covariates)
    if not link_dependent:
        beta.link_persistence = 0.0
        beta.instrument_slope = 0.0
    return beta


def agent_table(room, genders, skills, positions=None):
    n = len(genders)
    return pd.DataFrame({
        'classroom_id': room,
        'agent_id': [str(i + 1) for i in range(n)],
        'school': 's1',
        'grade': 'g1',
        'class_list_position': list(range(1, n + 1)) if positions is None else positions,
        'gender': genders,
        'cognitive_skills': skills,
    })


@pytest.fixture
def covariates_n2():
    return make_covariates(2)


@pytest.fixture
def covariates_n3():
    return make_covariates(3, n_covariates=2, seed=3)


@pytest.fixture
def tiny_panel():
    """Two classrooms of three students with hand-written networks."""
    observations = []
    specs = [
        ('c1', [0, 1, 0], [0.5, -0.2, 1.1], [[0, 1, 0], [0, 0, 0], [1, 0, 0]], [[0, 1, 1], [1, 0, 0], [1, 0, 0]]),
        ('c2', [1, 1, 0], [0.0, 0.3, -0.7], [[0, 0, 0], [0, 0, 1], [0, 0, 0]], [[0, 0, 0], [0, 0, 1], [0, 1, 0]]),
    ]
    for room, genders, skills, g0, g1 in specs:
        agents = agent_table(room, genders, skills)
        X = build_covariates(agents)
        observations.append(NetworkObservation(room, Network(np.array(g0)), Network(np.array(g1)), X, 's1', 'g1'))
    return NetworkPanel(observations)


@pytest.fixture
def synthetic_panel():
    spec = GeneratorSpec(n_classrooms=6, n_agents=(3, 4), tau=4, baseline='bernoulli', baseline_p=0.2,
                         beta=[0.2, -0.5, 0.3, 0.0,
                               -1.0, -0.8, 0.2,
                               0.5, 0.0, 0.0,
                               0.1, 0.0, 0.0])
    return synthesize_panel(spec, seed=11)
