"""Non-cooperative, Laplacian-regularised multitask, and consensus LMS recursions.

States are ``(K, M)`` arrays with row ``k`` holding agent ``k``'s iterate;
``NetworkState.stacked`` gives the agent-major ``MK`` vector.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datagen import DataSample, generate_network_samples
from .exceptions import DivergenceError, ValidationError

MODES = ("noncooperative", "multitask", "consensus")


@dataclass(frozen=True)
class NetworkState:
    iteration: int
    W: np.ndarray

    @property
    def stacked(self):
        return self.W.reshape(-1)

    @classmethod
    def zeros(cls, K, M):
        return cls(0, np.zeros((K, M)))


@dataclass
class LearnerConfig:
    """Which recursion to run and for how long.

    ``matrix`` is the Laplacian for ``multitask`` mode and the combination
    matrix for ``consensus`` mode; it is ignored otherwise.
    """

    mu: float
    mode: str = "noncooperative"
    matrix: np.ndarray | None = None
    iterations: int | None = None
    exact_gradient: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"stepsize must be positive, got {self.mu}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.mode != "noncooperative":
            if self.matrix is None:
                raise ValidationError(f"{self.mode} mode needs a K x K matrix")
            self.matrix = np.asarray(self.matrix, dtype=float)
            if self.mode == "multitask":
                check_laplacian_like(self.matrix)
            else:
                check_combination_matrix(self.matrix)
        if self.iterations is not None and self.iterations < 0:
            raise ValidationError("iteration budget must be nonnegative")


def check_laplacian_like(L, atol=1e-8):
    L = np.asarray(L)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {L.shape}")
    scale = max(1.0, np.abs(L).max())
    if not np.allclose(L, L.T, atol=atol * scale, rtol=0):
        raise ValidationError("multitask matrix must be symmetric")
    if np.abs(L.sum(axis=1)).max() > atol * scale:
        raise ValidationError("multitask matrix rows must sum to zero")


def check_combination_matrix(C, atol=1e-10):
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {C.shape}")
    if C.min() < -atol:
        raise ValidationError("combination matrix must be nonnegative")
    if np.abs(C.sum(axis=0) - 1).max() > atol or np.abs(C.sum(axis=1) - 1).max() > atol:
        raise ValidationError("combination matrix must be doubly stochastic")


def metropolis_weights(topology):
    """Metropolis-Hastings combination matrix on the graph support."""
    K = topology.num_agents
    deg = topology.degrees()
    C = np.zeros((K, K))
    for k, l, _ in topology.edges:
        C[k, l] = C[l, k] = 1.0 / (1 + max(deg[k], deg[l]))
    C[np.diag_indices(K)] = 1.0 - C.sum(axis=1)
    return C


def lms_gradient(w, sample: DataSample):
    """Instantaneous gradient of ``0.5 * (d - u^T w)^2``."""
    return -sample.u * (sample.d - sample.u @ w)


def _as_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 2:
        return samples
    U = np.stack([s.u for s in samples])
    d = np.array([s.d for s in samples])
    return U, d


def _network_gradient(W, samples):
    U, d = _as_arrays(samples)
    resid = d - np.einsum("km,km->k", U, W)
    return -U * resid[:, None]


def _checked(W, iteration):
    if not np.all(np.isfinite(W)):
        raise DivergenceError(iteration)
    return NetworkState(iteration, W)


def noncoop_step(state: NetworkState, samples, mu) -> NetworkState:
    """Independent LMS update at every agent."""
    W = state.W - mu * _network_gradient(state.W, samples)
    return _checked(W, state.iteration + 1)


def multitask_step(state: NetworkState, samples, mu, L_used) -> NetworkState:
    """``W <- (I - mu L) W - mu grad``; agent ``k`` reads only rows ``l`` with ``L[k, l] != 0``."""
    L_used = np.asarray(L_used)
    W = state.W
    W_new = W - mu * (L_used @ W) - mu * _network_gradient(W, samples)
    return _checked(W_new, state.iteration + 1)


def consensus_step(state: NetworkState, samples, mu, C) -> NetworkState:
    """Adapt-then-combine diffusion: ``psi_k = w_k - mu grad_k``, ``w_k = sum_l C[l, k] psi_l``."""
    check_combination_matrix(C)
    psi = state.W - mu * _network_gradient(state.W, samples)
    return _checked(np.asarray(C).T @ psi, state.iteration + 1)


def iteration_budget(mu, models, time_constants=20.0):
    """``ceil(time_constants / (mu * min_k sigma_u^2))``."""
    nu_min = min(m.sigma_u2 for m in models)
    return int(math.ceil(time_constants / (mu * nu_min)))


def stability_limit(models, L=None):
    """Mean-stability bound ``2 / (max sigma_u^2 + ||L||)``."""
    delta = max(m.sigma_u2 for m in models)
    norm = 0.0 if L is None else float(np.linalg.norm(L, 2))
    return 2.0 / (delta + norm)


class MSDRecorder:
    """Records ``(1/K) ||W_o - W_i||^2``."""

    name = "msd"

    def __init__(self, tasks):
        self.tasks = np.asarray(getattr(tasks, "values", tasks))

    def __call__(self, state):
        diff = self.tasks - state.W
        return float(np.sum(diff * diff) / diff.shape[0])


@dataclass
class LearnerResult:
    final: NetworkState
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    records: dict = field(default_factory=dict)


def run_learner(config: LearnerConfig, models, rng, recorders=(), record_every=1,
                initial: NetworkState | None = None) -> LearnerResult:
    """Iterate the configured recursion from ``W_0 = 0`` (or ``initial``).

    Recorders are called on the initial state and then every
    ``record_every`` iterations, plus on the final state.
    """
    rng = np.random.default_rng(rng)
    K, M = len(models), models[0].dim
    state = initial if initial is not None else NetworkState.zeros(K, M)
    if state.W.shape != (K, M):
        raise ValidationError(f"initial state shape {state.W.shape} != ({K}, {M})")
    n_iter = config.iterations if config.iterations is not None else iteration_budget(config.mu, models)
    if config.mode == "multitask":
        if config.mu * np.linalg.norm(config.matrix, 2) >= 1:
            warnings.warn(
                f"mu * ||L|| = {config.mu * np.linalg.norm(config.matrix, 2):.3g} >= 1; recursion may be unstable",
                RuntimeWarning, stacklevel=2,
            )
    H = np.array([m.sigma_u2 for m in models])
    W_o = np.stack([m.task for m in models])
    recorders = list(recorders)
    its, recs = [], {getattr(r, "name", f"r{i}"): [] for i, r in enumerate(recorders)}

    def record(s):
        its.append(s.iteration)
        for i, r in enumerate(recorders):
            recs[getattr(r, "name", f"r{i}")].append(r(s))

    if recorders:
        record(state)
    for i in range(n_iter):
        if config.exact_gradient:
            grad = H[:, None] * (state.W - W_o)
            samples = None
        else:
            samples = generate_network_samples(models, rng)
        if config.mode == "noncooperative":
            if samples is None:
                state = _checked(state.W - config.mu * grad, state.iteration + 1)
            else:
                state = noncoop_step(state, samples, config.mu)
        elif config.mode == "multitask":
            if samples is None:
                W = state.W - config.mu * (config.matrix @ state.W) - config.mu * grad
                state = _checked(W, state.iteration + 1)
            else:
                state = multitask_step(state, samples, config.mu, config.matrix)
        else:
            if samples is None:
                state = _checked(config.matrix.T @ (state.W - config.mu * grad), state.iteration + 1)
            else:
                psi = state.W - config.mu * _network_gradient(state.W, samples)
                state = _checked(config.matrix.T @ psi, state.iteration + 1)
        if recorders and (state.iteration % record_every == 0 or i == n_iter - 1):
            record(state)
    return LearnerResult(
        final=state,
        iterations=np.asarray(its, dtype=int),
        records={k: np.asarray(v) for k, v in recs.items()},
    )
