"""Steady-state second-order theory for the non-cooperative LMS recursion.

Indexing convention: agent-major stacking, entry ``(k, m)`` sits at
``k * M + m``. Diagonal operators may be passed as 1-D arrays of length
``M * K`` instead of dense matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import UnstableStepsizeError, ValidationError


def lms_hessian(models, dense=True):
    """Block-diagonal Hessian with blocks ``sigma_u,k^2 I_M``."""
    diag = np.concatenate([np.full(m.dim, m.sigma_u2) for m in models])
    return np.diag(diag) if dense else diag


def lms_gradient_noise_cov(models, dense=True):
    """Gradient-noise covariance at the optimum, blocks ``sigma_u,k^2 sigma_v,k^2 I_M``.

    At ``w = w_o`` the LMS gradient is ``-u v`` whose covariance is
    ``E[u u^T] sigma_v^2``.
    """
    diag = np.concatenate([np.full(m.dim, m.sigma_u2 * m.sigma_v2) for m in models])
    return np.diag(diag) if dense else diag


def _is_diag(A):
    A = np.asarray(A)
    return A.ndim == 1 or (A.ndim == 2 and np.count_nonzero(A - np.diag(np.diag(A))) == 0)


def _diag_of(A):
    A = np.asarray(A, dtype=float)
    return A if A.ndim == 1 else np.diag(A).copy()


def lyapunov_series(U, Q, tol=1e-14, max_doublings=64):
    """Solve ``U X U^T - X + Q = 0`` by doubling the series ``sum_t U^t Q U^t^T``.

    After ``j`` doublings the partial sum covers ``2^j`` terms; iteration
    stops once the increment is below ``tol`` relative to the sum.
    """
    U = np.asarray(U, dtype=float)
    X = np.asarray(Q, dtype=float).copy()
    A = U.copy()
    for _ in range(max_doublings):
        inc = A @ X @ A.T
        X = X + inc
        if np.linalg.norm(inc) <= tol * max(np.linalg.norm(X), np.finfo(float).tiny):
            break
        A = A @ A
    else:
        raise UnstableStepsizeError("Lyapunov series failed to converge")
    return 0.5 * (X + X.T)


def solve_lyapunov(H, R_s, mu):
    """Steady-state error covariance ``Pi`` with ``U Pi U - Pi + mu^2 R_s = 0``.

    ``U = I - mu H``. When ``H`` and ``R_s`` are both diagonal the
    closed form ``mu^2 r_j / (1 - (1 - mu h_j)^2)`` is used and ``Pi`` is
    returned in the same (1-D or dense) layout as ``H``.
    """
    if _is_diag(H) and _is_diag(R_s):
        h, r = _diag_of(H), _diag_of(R_s)
        if h.shape != r.shape:
            raise ValidationError("H and R_s sizes differ")
        u = 1.0 - mu * h
        if np.any(np.abs(u) >= 1):
            raise UnstableStepsizeError(f"mu={mu} makes I - mu H unstable (needs mu < 2 / max h)")
        pi = mu**2 * r / (1.0 - u**2)
        return np.diag(pi) if np.asarray(H).ndim == 2 else pi
    H = np.asarray(H, dtype=float)
    R_s = np.asarray(R_s, dtype=float)
    if R_s.ndim == 1:
        R_s = np.diag(R_s)
    if H.ndim == 1:
        H = np.diag(H)
    U = np.eye(H.shape[0]) - mu * H
    rho = np.max(np.abs(np.linalg.eigvals(U)))
    if rho >= 1:
        raise UnstableStepsizeError(f"spectral radius of I - mu H is {rho:.4g} >= 1")
    return lyapunov_series(U, mu**2 * R_s)


def lyapunov_residual(H, R_s, mu, Pi):
    """Relative residual ``||U Pi U - Pi + mu^2 R_s|| / ||mu^2 R_s||``."""
    H, R_s, Pi = (np.diag(x) if np.asarray(x).ndim == 1 else np.asarray(x) for x in (H, R_s, Pi))
    U = np.eye(H.shape[0]) - mu * H
    res = U @ Pi @ U - Pi + mu**2 * R_s
    return float(np.linalg.norm(res, 2) / max(np.linalg.norm(mu**2 * R_s, 2), np.finfo(float).tiny))


def commutation_matrix(K, M):
    """Permutation ``P`` taking agent-major ``col{w_1..w_K}`` to feature-major order."""
    P = np.zeros((K * M, K * M))
    for k in range(K):
        for m in range(M):
            P[m * K + k, k * M + m] = 1.0
    return P


def blktr(A, K):
    """Sum of the ``K x K`` diagonal blocks of a square matrix of size ``M K``."""
    A = np.asarray(A)
    n = A.shape[0]
    if n % K:
        raise ValidationError(f"size {n} is not a multiple of K={K}")
    M = n // K
    return np.einsum("mimj->ij", A.reshape(M, K, M, K))


def feature_blktr(Pi, K, M):
    """``blktr(P Pi P^T)`` computed without forming ``P``.

    Entry ``(k, l)`` is ``sum_m Pi[(k, m), (l, m)]``.
    """
    Pi = np.asarray(Pi, dtype=float)
    if Pi.ndim == 1:
        return np.diag(Pi.reshape(K, M).sum(axis=1))
    return np.einsum("kmlm->kl", Pi.reshape(K, M, K, M))


def bias_floor_reference(L_pinv, Pi, K, M):
    """``tr(L^dagger) tr(Phi) + ||blktr(Phi) / M||^2`` with ``Phi = P Pi P^T``.

    Proportional to the large-``M`` bias floor up to an unknown constant;
    use only for ratios.
    """
    Pi = np.asarray(Pi, dtype=float)
    tr_phi = float(Pi.sum() if Pi.ndim == 1 else np.trace(Pi))
    B = feature_blktr(Pi, K, M) / M
    return float(np.trace(L_pinv)) * tr_phi + float(np.linalg.norm(B, 2) ** 2)


def lms_mean_square_limit(models):
    """Largest stable stepsize for Gaussian-regressor LMS: ``2 / (max sigma_u^2 (M + 2))``."""
    M = models[0].dim
    return 2.0 / (max(m.sigma_u2 for m in models) * (M + 2))


def lms_gaussian_steady_variance(sigma_u2, sigma_v2, mu, M):
    """Per-coordinate steady error variance of LMS with Gaussian regressors.

    Includes the fourth-moment term that the first-order Lyapunov model
    drops: ``mu sigma_v^2 / (2 - mu sigma_u^2 (M + 2))``.
    """
    denom = 2.0 - mu * np.asarray(sigma_u2) * (M + 2)
    if np.any(denom <= 0):
        raise UnstableStepsizeError(f"mu={mu} is not mean-square stable for M={M}")
    return mu * np.asarray(sigma_v2) / denom


@dataclass
class SteadyStateModel:
    """Hessian, gradient-noise covariance, stepsize and the solved ``Pi`` (diagonal layout)."""

    H: np.ndarray
    R_s: np.ndarray
    mu: float
    Pi: np.ndarray

    @classmethod
    def from_models(cls, models, mu):
        H = lms_hessian(models, dense=False)
        R = lms_gradient_noise_cov(models, dense=False)
        return cls(H=H, R_s=R, mu=mu, Pi=solve_lyapunov(H, R, mu))

    @property
    def trace(self):
        return float(np.sum(self.Pi) if self.Pi.ndim == 1 else np.trace(self.Pi))

    def residual(self):
        U = 1.0 - self.mu * self.H
        res = U * self.Pi * U - self.Pi + self.mu**2 * self.R_s
        return float(np.abs(res).max() / max(np.abs(self.mu**2 * self.R_s).max(), np.finfo(float).tiny))
