"""Covariance and Laplacian estimation from a snapshot of agent parameters."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import IllConditionedEstimateError, ValidationError
from .graph import centering_projector

EIG_FLOOR_REL = 1e-8


@dataclass(frozen=True)
class CovarianceEstimate:
    raw: np.ndarray
    projected: np.ndarray


@dataclass(frozen=True)
class LaplacianEstimate:
    L_hat: np.ndarray
    rank: int
    eigenvalues: np.ndarray  # of the projected covariance, ascending
    floor: float
    covariance: CovarianceEstimate | None = None

    def positive_offdiagonal_mass(self):
        off = self.L_hat - np.diag(np.diag(self.L_hat))
        return float(off[off > 0].sum() / 2)

    def diagnostics(self):
        return {
            "K": int(self.L_hat.shape[0]),
            "rank": self.rank,
            "eigenvalue_floor": self.floor,
            "covariance_eigenvalues": [float(x) for x in self.eigenvalues],
            "laplacian_eigenvalues": [float(x) for x in np.linalg.eigvalsh(self.L_hat)],
            "positive_offdiagonal_mass": self.positive_offdiagonal_mass(),
        }

    def diagnostics_json(self):
        return json.dumps(self.diagnostics(), indent=2)


def empirical_covariance(W) -> np.ndarray:
    """Feature-averaged outer product ``(1/M) sum_m w^(m) w^(m)^T``.

    ``W`` is the ``(K, M)`` parameter matrix; its columns are the feature
    slices across agents.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    K, M = W.shape
    if M < 1:
        raise ValidationError("need at least one feature")
    S = (W @ W.T) / M
    return 0.5 * (S + S.T)


def project_covariance(S) -> np.ndarray:
    """``Q S Q`` with ``Q`` the centering projector."""
    S = np.asarray(S, dtype=float)
    Q = centering_projector(S.shape[0])
    P = Q @ S @ Q
    return 0.5 * (P + P.T)


def estimate_laplacian(S_perp, rel_floor=EIG_FLOOR_REL, reference_scale=0.0) -> LaplacianEstimate:
    """Pseudo-invert a projected covariance, keeping its ``K - 1`` top eigenvalues.

    Eigenvalues below ``rel_floor * max(lambda_max, 1e-4 * reference_scale)``
    count as null; ``reference_scale`` (e.g. the trace of the unprojected
    covariance) keeps pure round-off from being mistaken for signal.

    Raises
    ------
    IllConditionedEstimateError
        If more than one eigenvalue falls below ``rel_floor`` times the
        largest one.
    """
    S_perp = np.asarray(S_perp, dtype=float)
    K = S_perp.shape[0]
    S_perp = 0.5 * (S_perp + S_perp.T)
    lam, V = np.linalg.eigh(S_perp)
    floor = rel_floor * max(lam[-1], 1e-4 * reference_scale, 0.0)
    if lam[-1] <= 0 or np.count_nonzero(lam < floor) > 1:
        raise IllConditionedEstimateError(lam, floor)
    keep = slice(1, K)
    inv = 1.0 / np.maximum(lam[keep], floor)
    L_hat = (V[:, keep] * inv) @ V[:, keep].T
    Q = centering_projector(K)
    L_hat = Q @ L_hat @ Q
    L_hat = 0.5 * (L_hat + L_hat.T)
    return LaplacianEstimate(L_hat=L_hat, rank=K - 1, eigenvalues=lam, floor=floor)


def estimate_from_states(W, rel_floor=EIG_FLOOR_REL) -> LaplacianEstimate:
    """Covariance, projection, and pseudo-inversion in one call."""
    raw = empirical_covariance(W)
    proj = project_covariance(raw)
    est = estimate_laplacian(proj, rel_floor=rel_floor, reference_scale=float(np.trace(raw)))
    return LaplacianEstimate(
        L_hat=est.L_hat, rank=est.rank, eigenvalues=est.eigenvalues, floor=est.floor,
        covariance=CovarianceEstimate(raw=raw, projected=proj),
    )


def spectral_error(A, B) -> float:
    """Squared spectral norm ``||A - B||^2``."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    D = A - B
    if D.size == 0:
        return 0.0
    return float(np.linalg.norm(D, 2) ** 2)


def save_matrix_csv(path, A):
    np.savetxt(path, np.atleast_2d(A), delimiter=",", fmt="%.17g")
