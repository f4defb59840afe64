"""Zero-mean GMRF prior over stacked task vectors with precision ``L kron I_M``."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import LaplacianMatrix
from .exceptions import ValidationError


@dataclass(frozen=True)
class TaskMatrix:
    """True tasks as a ``(K, M)`` array; row ``k`` is agent ``k``'s task."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError(f"task matrix must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def num_agents(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def stacked(self):
        """Agent-major stacking ``col{w_1, ..., w_K}``."""
        return self.values.reshape(-1)

    @classmethod
    def from_stacked(cls, vec, num_agents):
        vec = np.asarray(vec, dtype=float)
        return cls(vec.reshape(num_agents, -1))

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        return cls(np.atleast_2d(np.loadtxt(Path(path), delimiter=",", ndmin=2)))


def spectral_sqrt_pinv(L: LaplacianMatrix) -> np.ndarray:
    """``(K, K-1)`` factor ``S`` with ``S S^T = L^dagger``."""
    return L.eigenvectors[:, 1:] / np.sqrt(L.eigenvalues[1:])


def sample_tasks(L: LaplacianMatrix, M: int, rng) -> TaskMatrix:
    """Draw ``M`` independent feature columns from ``N(0, L^dagger)``.

    Each column is ``sum_{j>=2} lambda_j^{-1/2} v_j z_j``, so it lies in
    ``range(L)`` exactly up to round-off.
    """
    if M < 1:
        raise ValidationError(f"M must be positive, got {M}")
    rng = np.random.default_rng(rng)
    S = spectral_sqrt_pinv(L)
    Z = rng.standard_normal((S.shape[1], M))
    W = S @ Z
    # S columns are orthogonal to 1 only to round-off; remove the residue
    W -= W.mean(axis=0, keepdims=True)
    return TaskMatrix(W)


def log_pseudo_determinant(L: LaplacianMatrix) -> float:
    """``sum_{j>=2} log lambda_j``."""
    return float(np.sum(np.log(L.eigenvalues[1:])))


def log_prior_density(W, L: LaplacianMatrix, tol=1e-8) -> float:
    """Log of the GMRF density at ``W``.

    Returns ``-inf`` when any feature column has a component along the
    all-ones vector beyond ``tol`` (relative), since the prior has no mass
    off ``range(L)``.
    """
    W = W.values if isinstance(W, TaskMatrix) else np.atleast_2d(np.asarray(W, dtype=float))
    K, M = W.shape
    if K != L.num_agents:
        raise ValidationError(f"task matrix has {K} rows, Laplacian is {L.num_agents}x{L.num_agents}")
    col_sums = np.abs(W.sum(axis=0)) / np.sqrt(K)
    col_norms = np.linalg.norm(W, axis=0)
    if np.any(col_sums > tol * np.maximum(col_norms, 1.0)):
        return -np.inf
    quad = float(np.sum(W * (L.entries @ W)))
    rank = K - 1
    # log det*(2 pi L^dagger kron I_M) = M * [(K-1) log 2pi - sum log lambda_j]
    log_det = M * (rank * np.log(2 * np.pi) - log_pseudo_determinant(L))
    return -0.5 * quad - 0.5 * log_det
