import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrf_mtl.estimation import (EIG_FLOOR_REL, empirical_covariance, estimate_from_states,
                                 estimate_laplacian, project_covariance, save_matrix_csv,
                                 spectral_error)
from gmrf_mtl.exceptions import IllConditionedEstimateError, ValidationError
from gmrf_mtl.gmrf import sample_tasks
from gmrf_mtl.theory import blktr, commutation_matrix


def _oracle_covariance(W):
    # literal (1/M) blktr((P w)(P w)^T) with an explicit commutation matrix
    K, M = W.shape
    P = commutation_matrix(K, M)
    v = P @ W.reshape(-1)
    return blktr(np.outer(v, v), K) / M


def test_covariance_hand_example():
    W = np.array([[1.0, 3.0], [2.0, 4.0]])
    np.testing.assert_allclose(empirical_covariance(W), [[5, 7], [7, 10]])
    np.testing.assert_allclose(_oracle_covariance(W), [[5, 7], [7, 10]])


def test_covariance_trivial_cases():
    np.testing.assert_array_equal(empirical_covariance(np.zeros((3, 4))), 0)
    w = np.array([[1.0], [-2.0], [0.5]])
    S = empirical_covariance(w)
    np.testing.assert_allclose(S, w @ w.T)
    assert np.linalg.matrix_rank(S) == 1


@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_covariance_commutation_oracle(K, M, seed):
    W = np.random.default_rng(seed).standard_normal((K, M))
    np.testing.assert_allclose(empirical_covariance(W), _oracle_covariance(W), atol=1e-12, rtol=0)


def test_projection_examples():
    np.testing.assert_allclose(project_covariance(np.array([[5.0, 7.0], [7.0, 10.0]])),
                               [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)
    np.testing.assert_allclose(project_covariance(np.ones((4, 4))), 0, atol=1e-15)
    S = np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    np.testing.assert_allclose(project_covariance(S), S, atol=1e-15)


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_projection_idempotent_and_centered(K, seed):
    A = np.random.default_rng(seed).standard_normal((K, K + 2))
    S = A @ A.T
    P = project_covariance(S)
    np.testing.assert_allclose(project_covariance(P), P, atol=1e-12)
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.norm(P @ np.ones(K)) <= 1e-10 * np.linalg.norm(P, 2)


def test_estimate_two_node():
    est = estimate_laplacian(np.array([[0.25, -0.25], [-0.25, 0.25]]))
    np.testing.assert_allclose(est.L_hat, [[1, -1], [-1, 1]], atol=1e-14)
    S = np.array([[0.25, -0.25], [-0.25, 0.25]])
    np.testing.assert_allclose(est.L_hat @ S @ est.L_hat, est.L_hat, atol=1e-14)
    assert est.rank == 1


def test_estimate_inverts_exact_pinv(net10):
    est = estimate_laplacian(net10.pinv)
    assert np.linalg.norm(est.L_hat - net10.entries, 2) <= 1e-10 * np.linalg.norm(net10.entries, 2)


def test_estimate_homogeneity(net10):
    S = project_covariance(empirical_covariance(sample_tasks(net10, 200, np.random.default_rng(0)).values))
    a = estimate_laplacian(S).L_hat
    b = estimate_laplacian(4.0 * S).L_hat
    np.testing.assert_allclose(b, a / 4.0, rtol=1e-10, atol=1e-12)


@given(st.integers(3, 8), st.integers(0, 2**32 - 1))
def test_rank_contract(K, seed):
    W = np.random.default_rng(seed).standard_normal((K, 3 * K))
    est = estimate_from_states(W)
    lam = np.linalg.eigvalsh(est.L_hat)
    scale = lam[-1]
    assert np.count_nonzero(np.abs(lam) > 1e-10 * scale) == K - 1
    assert np.linalg.norm(est.L_hat @ np.ones(K)) <= 1e-10 * scale
    np.testing.assert_array_equal(est.L_hat, est.L_hat.T)
    assert lam[0] >= -1e-10 * scale


def test_two_node_exact_recovery():
    c = 0.5
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    W = np.column_stack([c * v, -c * v])
    est = estimate_from_states(W)
    # Sigma_perp = c^2 v v^T so L_hat = v v^T / c^2
    np.testing.assert_allclose(est.L_hat, np.outer(v, v) / c**2, atol=1e-12)


def test_benchmark_recovery_improves_with_m(net10):
    r = np.random.default_rng(3)
    errs = {M: np.mean([spectral_error(estimate_from_states(sample_tasks(net10, M, r).values).L_hat, net10.entries)
                        for _ in range(30)]) for M in (2000, 8000, 32000)}
    assert errs[8000] < errs[2000] and errs[32000] < errs[8000]
    assert errs[32000] / np.linalg.norm(net10.entries, 2) ** 2 < 0.01


def test_constant_states_are_ill_conditioned():
    with pytest.raises(IllConditionedEstimateError):
        estimate_from_states(np.tile(np.array([1.0, 2.0, 3.0]), (4, 1)))
    with pytest.raises(IllConditionedEstimateError):
        estimate_from_states(np.zeros((3, 5)))


def test_rank_deficient_estimate_raises():
    # K=4 agents but only two feature columns: projected covariance has rank <= 2
    W = np.random.default_rng(0).standard_normal((4, 2))
    with pytest.raises(IllConditionedEstimateError) as info:
        estimate_from_states(W)
    assert info.value.floor > 0


def test_floor_is_relative(net10):
    est = estimate_laplacian(net10.pinv)
    assert est.floor == pytest.approx(EIG_FLOOR_REL * est.eigenvalues[-1])


def test_diagnostics(net10, tmp_path):
    est = estimate_from_states(sample_tasks(net10, 100, np.random.default_rng(1)).values)
    d = json.loads(est.diagnostics_json())
    assert d["K"] == 10 and d["rank"] == 9
    assert len(d["covariance_eigenvalues"]) == 10
    assert d["positive_offdiagonal_mass"] >= 0
    np.testing.assert_allclose(est.covariance.projected @ np.ones(10), 0, atol=1e-12)
    p = tmp_path / "L.csv"
    save_matrix_csv(p, est.L_hat)
    np.testing.assert_array_equal(np.loadtxt(p, delimiter=","), est.L_hat)


def test_spectral_error_examples():
    A = np.random.default_rng(0).standard_normal((3, 3))
    assert spectral_error(A, A) == 0.0
    assert spectral_error(np.diag([3.0, 0.0]), np.zeros((2, 2))) == pytest.approx(9.0)
    assert spectral_error(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2))) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        spectral_error(np.zeros((2, 2)), np.zeros((3, 3)))
