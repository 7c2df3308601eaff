"""
Gaussian priors and proposals over the coefficient vector, with
pseudo-random or scrambled-Halton draws.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.stats import norm, qmc

from config import config
from components.errors import ConfigurationError
from components.model import ParamVector


def standard_normal_draws(size: int, dim: int, rng: np.random.Generator, halton: bool = False) -> np.ndarray:
    """
    (size, dim) standard normal draws.

    Halton mode maps a scrambled Halton sequence, seeded from rng, through the
    normal quantile function.
    """
    if dim == 0:
        return np.zeros((size, 0))
    if not halton:
        return rng.standard_normal((size, dim))
    sampler = qmc.Halton(d=dim, scramble=True, seed=rng)
    u = sampler.random(size)
    return norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))


def gaussian_draws(mean: np.ndarray, cov: np.ndarray, size: int, rng: np.random.Generator,
                   halton: bool = False) -> np.ndarray:
    """Draws from N(mean, cov) through the Cholesky factor."""
    chol = np.linalg.cholesky(cov)
    z = standard_normal_draws(size, mean.shape[0], rng, halton)
    return mean[None, :] + z @ chol.T


@dataclass(eq=False)
class PriorSpec:
    """
    Independent Gaussian prior per coefficient.

    Coefficients flagged in `fixed` are pinned at their mean and excluded from
    inference. `tau` records a point-mass prior on the number of rounds.
    """
    mean: np.ndarray
    sd: np.ndarray
    fixed: Optional[np.ndarray] = None
    tau: Optional[int] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.sd = np.broadcast_to(np.asarray(self.sd, dtype=float), self.mean.shape).copy()
        if self.fixed is None:
            self.fixed = np.zeros(self.mean.shape, dtype=bool)
        self.fixed = np.asarray(self.fixed, dtype=bool).reshape(-1)
        if self.fixed.shape != self.mean.shape:
            raise ConfigurationError('fixed mask must have one entry per coefficient')
        if np.any(self.sd[~self.fixed] <= 0) or not np.isfinite(self.sd).all():
            raise ConfigurationError('prior standard deviations must be positive and finite')
        if not np.isfinite(self.mean).all():
            raise ConfigurationError('prior means must be finite')
        if self.tau is not None and self.tau < 0:
            raise ConfigurationError('tau must be nonnegative')

    @classmethod
    def default(cls, n_covariates: int, sd: Optional[float] = None, tau: Optional[int] = None) -> 'PriorSpec':
        dim = ParamVector.dim(n_covariates)
        return cls(np.zeros(dim), np.full(dim, config.PRIOR_SD if sd is None else sd), tau=tau)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    @property
    def n_free(self) -> int:
        return int((~self.fixed).sum())

    def pin(self, values: Dict[int, float]) -> 'PriorSpec':
        """Copy with the given coefficients pinned at the given values."""
        mean = self.mean.copy()
        fixed = self.fixed.copy()
        for index, value in values.items():
            mean[index] = value
            fixed[index] = True
        return PriorSpec(mean, self.sd, fixed, self.tau)

    def free_mean(self) -> np.ndarray:
        return self.mean[~self.fixed]

    def free_cov(self) -> np.ndarray:
        return np.diag(self.sd[~self.fixed] ** 2)

    def expand(self, free_draws: np.ndarray) -> np.ndarray:
        """Embed (S, n_free) draws into full (S, dim) coefficient arrays."""
        free_draws = np.atleast_2d(free_draws)
        full = np.broadcast_to(self.mean, (free_draws.shape[0], self.dim)).copy()
        full[:, ~self.fixed] = free_draws
        return full

    def sample(self, size: int, rng: np.random.Generator, halton: bool = False) -> np.ndarray:
        z = standard_normal_draws(size, self.n_free, rng, halton)
        return self.expand(self.free_mean()[None, :] + z * self.sd[~self.fixed][None, :])

    def log_pdf(self, draws: np.ndarray) -> np.ndarray:
        free = np.atleast_2d(draws)[:, ~self.fixed]
        return norm.logpdf(free, self.free_mean(), self.sd[~self.fixed]).sum(axis=1)

    def to_dict(self) -> Dict:
        return {'mean': self.mean, 'sd': self.sd, 'fixed': self.fixed, 'tau': self.tau}


@dataclass(eq=False)
class ProposalSpec:
    """Independent Gaussian proposal on the free coefficients; None means the prior itself."""
    mean: Optional[np.ndarray] = None
    sd: Optional[np.ndarray] = None

    @property
    def is_prior(self) -> bool:
        return self.mean is None

    def resolve(self, prior: PriorSpec) -> PriorSpec:
        if self.is_prior:
            return prior
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), mean.shape)
        if mean.shape != prior.mean.shape:
            raise ConfigurationError('proposal must cover every coefficient')
        # Pinned coefficients stay where the prior puts them
        mean = np.where(prior.fixed, prior.mean, mean)
        return PriorSpec(mean, np.where(prior.fixed, prior.sd, sd), prior.fixed, prior.tau)

    def to_dict(self) -> Dict:
        return {'mean': self.mean, 'sd': self.sd}
