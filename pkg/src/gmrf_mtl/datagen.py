"""Streaming linear-regression data for each agent.

Regressors and noise are Gaussian: ``u ~ N(0, sigma_u^2 I_M)``,
``v ~ N(0, sigma_v^2)``, ``d = u^T w_o + v``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .gmrf import TaskMatrix


@dataclass(frozen=True)
class AgentDataModel:
    sigma_u2: float
    sigma_v2: float
    task: np.ndarray

    def __post_init__(self):
        if not self.sigma_u2 > 0:
            raise ValidationError(f"regressor variance must be positive, got {self.sigma_u2}")
        if not self.sigma_v2 >= 0:
            raise ValidationError(f"noise variance must be nonnegative, got {self.sigma_v2}")
        object.__setattr__(self, "task", np.asarray(self.task, dtype=float).reshape(-1))

    @property
    def dim(self):
        return self.task.shape[0]


@dataclass(frozen=True)
class DataSample:
    u: np.ndarray
    d: float
    agent: int = 0


def generate_sample(model: AgentDataModel, rng, agent=0) -> DataSample:
    u = np.sqrt(model.sigma_u2) * rng.standard_normal(model.dim)
    v = np.sqrt(model.sigma_v2) * rng.standard_normal()
    return DataSample(u=u, d=float(u @ model.task + v), agent=agent)


def generate_network_samples(models, rng):
    """One fresh sample per agent, as arrays ``U (K, M)`` and ``d (K,)``."""
    K, M = len(models), models[0].dim
    su = np.sqrt(np.array([m.sigma_u2 for m in models]))
    sv = np.sqrt(np.array([m.sigma_v2 for m in models]))
    U = su[:, None] * rng.standard_normal((K, M))
    v = sv * rng.standard_normal(K)
    W = np.stack([m.task for m in models])
    d = np.einsum("km,km->k", U, W) + v
    return U, d


@dataclass(frozen=True)
class VarianceProfile:
    """Per-agent variances, either fixed or drawn uniformly from ranges.

    A range ``(lo, hi)`` with ``lo == hi`` means a fixed value.
    """

    sigma_u2: tuple = (0.8, 1.2)
    sigma_v2: tuple = (0.05, 0.2)

    def __post_init__(self):
        for name in ("sigma_u2", "sigma_v2"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0 or (name == "sigma_u2" and lo <= 0):
                raise ValidationError(f"invalid {name} range ({lo}, {hi})")

    @classmethod
    def uniform(cls, sigma_u2, sigma_v2):
        return cls((sigma_u2, sigma_u2), (sigma_v2, sigma_v2))

    def draw(self, K, rng):
        rng = np.random.default_rng(rng)
        su = rng.uniform(*self.sigma_u2, size=K)
        sv = rng.uniform(*self.sigma_v2, size=K)
        return su, sv


def make_network_models(K, M, profile: VarianceProfile, tasks: TaskMatrix, rng=None):
    """Bind each agent's task to variances drawn from ``profile``."""
    values = tasks.values if isinstance(tasks, TaskMatrix) else np.asarray(tasks)
    if values.shape != (K, M):
        raise ValidationError(f"tasks have shape {values.shape}, expected ({K}, {M})")
    su, sv = profile.draw(K, rng)
    return [AgentDataModel(float(su[k]), float(sv[k]), values[k]) for k in range(K)]
