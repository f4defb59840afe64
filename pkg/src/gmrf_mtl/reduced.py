"""Low-dimensional exact simulators for LMS recursions with isotropic Gaussian regressors.

With ``u_k ~ N(0, sigma_k^2 I_M)`` the law of every recursion here is
invariant under rotations of feature space that fix the row space of the
true tasks. The iterates can therefore be tracked in a small moving
orthonormal basis, and the components of each fresh regressor outside
that basis enter only through norms and Gram matrices (chi-square and
Bartlett draws). The final states and MSD series have exactly the same
distribution as the literal ``(K, M)`` recursions in :mod:`.learners`,
but each step costs ``O(K)`` or ``O(K^3)`` instead of ``O(K M)``.
"""
from __future__ import annotations

import numba
import numpy as np

from .exceptions import DivergenceError, ValidationError

_BLOWUP = 1e100


@numba.njit(cache=True)
def _agent_chains(rng, a0, su2, sv2, mu, n_steps, M):
    # per-agent error x_k = a_k e_k + b_k f_k, e_k = w_o,k / |w_o,k|, f_k unit and orthogonal to e_k
    K = a0.shape[0]
    a = a0.copy()
    b = np.zeros(K)
    su = np.sqrt(su2)
    sv = np.sqrt(sv2)
    dof = M - 2.0
    for i in range(n_steps):
        for k in range(K):
            ge = su[k] * rng.standard_normal()
            gf = su[k] * rng.standard_normal()
            c = a[k] * ge + b[k] * gf + sv[k] * rng.standard_normal()
            a[k] -= mu * c * ge
            if M >= 2:
                t = b[k] - mu * c * gf
                q = su2[k] * rng.chisquare(dof) if dof > 0 else 0.0
                b[k] = np.sqrt(t * t + mu * mu * c * c * q)
            if not (abs(a[k]) < _BLOWUP and b[k] < _BLOWUP):
                return a, b, i + 1
    return a, b, -1


def noncoop_error_coordinates(task_norms, sigma_u2, sigma_v2, mu, n_steps, M, rng):
    """Run the per-agent two-coordinate chains from ``W_0 = 0``.

    Returns ``(a, b)``: the error of agent ``k`` after ``n_steps`` is
    ``a_k e_k + b_k f_k`` with ``e_k`` the direction of its true task and
    ``f_k`` a uniformly random unit vector orthogonal to it.
    """
    a0 = np.ascontiguousarray(task_norms, dtype=float)
    su2 = np.ascontiguousarray(sigma_u2, dtype=float)
    sv2 = np.ascontiguousarray(sigma_v2, dtype=float)
    a, b, div = _agent_chains(rng, a0, su2, sv2, float(mu), int(n_steps), int(M))
    if div >= 0:
        raise DivergenceError(int(div))
    return a, b


def noncoop_final_states(tasks, sigma_u2, sigma_v2, mu, n_steps, rng):
    """Sample the non-cooperative LMS snapshot ``W_i`` after ``n_steps`` steps.

    Parameters
    ----------
    tasks : ndarray, shape (K, M)
    sigma_u2, sigma_v2 : array_like, shape (K,)
    mu : float
    n_steps : int
    rng : numpy.random.Generator

    Returns
    -------
    ndarray, shape (K, M)
        Distributed exactly as the output of ``n_steps`` literal
        ``noncoop_step`` updates with fresh Gaussian data.
    """
    tasks = np.asarray(tasks, dtype=float)
    K, M = tasks.shape
    norms = np.linalg.norm(tasks, axis=1)
    a, b = noncoop_error_coordinates(norms, sigma_u2, sigma_v2, mu, n_steps, M, rng)
    E = np.empty_like(tasks)
    G = rng.standard_normal((K, M))
    for k in range(K):
        if norms[k] > 0:
            e = tasks[k] / norms[k]
        else:
            e = G[k] / np.linalg.norm(G[k])
            G[k] = rng.standard_normal(M)
        f = G[k] - (G[k] @ e) * e
        nf = np.linalg.norm(f)
        f = f / nf if nf > 0 else f
        E[k] = a[k] * e + b[k] * f
    return tasks - E


@numba.njit(cache=True)
def _network_chain(rng, C_o, su2, sv2, mu, A, B, n_steps, M, record_every):
    K, r = C_o.shape
    n = r + K
    Y = np.zeros((K, n))
    target = np.zeros((K, n))
    target[:, :r] = C_o
    su = np.sqrt(su2)
    sv = np.sqrt(sv2)
    m_rest = M - n
    n_rec = n_steps // record_every + 1
    msd = np.empty(n_rec)
    d0 = target - Y
    msd[0] = np.sum(d0 * d0) / K
    rec = 1
    G = np.empty((K, n))
    T = np.zeros((K, K))
    Z = np.empty((2 * K, K))
    for i in range(n_steps):
        for k in range(K):
            for j in range(n):
                G[k, j] = su[k] * rng.standard_normal()
        # innovations e_k = d_k - u_k^T w_k
        e = np.empty(K)
        for k in range(K):
            s = 0.0
            for j in range(n):
                s += G[k, j] * (target[k, j] - Y[k, j])
            e[k] = s + sv[k] * rng.standard_normal()
        # Bartlett factor of the K fresh components outside the tracked span
        for p in range(K):
            T[p, p] = np.sqrt(rng.chisquare(m_rest - p))
            for q in range(p):
                T[p, q] = rng.standard_normal()
        step = np.empty((K, n))
        for k in range(K):
            for j in range(n):
                step[k, j] = mu * e[k] * G[k, j]
        Ynew = A @ Y + B @ step
        # coordinates along the K new directions
        N = np.empty((K, K))
        for k in range(K):
            for j in range(K):
                N[k, j] = mu * e[k] * su[k] * T[k, j]
        N = B @ N
        # re-orthonormalise the out-of-task part: rank <= K
        Z[:K, :] = Ynew[:, r:].T
        Z[K:, :] = N.T
        Qz, Rz = np.linalg.qr(Z)
        Y[:, :r] = Ynew[:, :r]
        Y[:, r:] = Rz.T
        ok = True
        for k in range(K):
            for j in range(n):
                if not abs(Y[k, j]) < _BLOWUP:
                    ok = False
        if not ok:
            return Y, msd[:rec], i + 1
        if (i + 1) % record_every == 0:
            d = target - Y
            msd[rec] = np.sum(d * d) / K
            rec += 1
    return Y, msd[:rec], -1


def network_msd(tasks, sigma_u2, sigma_v2, mu, n_steps, rng, mode="noncooperative",
                matrix=None, record_every=100):
    """MSD series ``(1/K) ||W_o - W_i||^2`` of a coupled LMS recursion, from ``W_0 = 0``.

    ``mode`` is ``noncooperative``, ``multitask`` (``matrix`` = Laplacian
    used) or ``consensus`` (``matrix`` = combination matrix, adapt then
    combine). Requires ``M >= 3 K`` so the untracked subspace is large
    enough for the Bartlett draws.

    Returns
    -------
    iterations : ndarray of int
    msd : ndarray
    """
    tasks = np.asarray(tasks, dtype=float)
    K, M = tasks.shape
    if M < 3 * K:
        raise ValidationError(f"reduced network simulation needs M >= 3K, got M={M}, K={K}")
    I = np.eye(K)
    if mode == "noncooperative":
        A, B = I, I
    elif mode == "multitask":
        A, B = I - mu * np.asarray(matrix, dtype=float), I
    elif mode == "consensus":
        C = np.asarray(matrix, dtype=float)
        A = B = np.ascontiguousarray(C.T)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    # coordinates of the tasks in an orthonormal basis of their row space
    _, R = np.linalg.qr(tasks.T)
    C_o = np.ascontiguousarray(R.T)
    Y, msd, div = _network_chain(
        rng, C_o, np.ascontiguousarray(sigma_u2, dtype=float),
        np.ascontiguousarray(sigma_v2, dtype=float), float(mu),
        np.ascontiguousarray(A), np.ascontiguousarray(B), int(n_steps), int(M), int(record_every),
    )
    if div >= 0:
        raise DivergenceError(int(div))
    its = np.arange(len(msd)) * record_every
    return its, msd
