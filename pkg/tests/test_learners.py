import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrf_mtl.datagen import AgentDataModel, DataSample
from gmrf_mtl.exceptions import DivergenceError, ValidationError
from gmrf_mtl.graph import GraphTopology, build_laplacian, random_topology
from gmrf_mtl.learners import (LearnerConfig, MSDRecorder, NetworkState, consensus_step,
                               iteration_budget, lms_gradient, metropolis_weights,
                               multitask_step, noncoop_step, run_learner, stability_limit)


def _loss(w, s):
    return 0.5 * (s.d - s.u @ w) ** 2


def test_gradient_examples():
    np.testing.assert_array_equal(lms_gradient(np.zeros(2), DataSample(np.array([1.0, 0.0]), 1.0)), [-1, 0])
    u = np.array([0.3, -0.7])
    w = np.array([1.0, 2.0])
    np.testing.assert_array_equal(lms_gradient(w, DataSample(u, float(u @ w))), [0, 0])
    np.testing.assert_array_equal(lms_gradient(np.ones(2), DataSample(np.array([2.0, 0.0]), 1.0)), [2, 0])


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_gradient_finite_difference(M, seed):
    r = np.random.default_rng(seed)
    s = DataSample(r.standard_normal(M), float(r.standard_normal()))
    w = r.standard_normal(M)
    g = lms_gradient(w, s)
    h = 1e-6
    fd = np.array([(_loss(w + h * e, s) - _loss(w - h * e, s)) / (2 * h) for e in np.eye(M)])
    assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-3)


def _samples(rng, K, M):
    return rng.standard_normal((K, M)), rng.standard_normal(K)


def test_noncoop_zero_step_is_identity(rng):
    st0 = NetworkState(3, rng.standard_normal((3, 4)))
    out = noncoop_step(st0, _samples(rng, 3, 4), 0.0)
    np.testing.assert_array_equal(out.W, st0.W)
    assert out.iteration == 4


def test_noncoop_single_agent_example():
    s = [DataSample(np.array([1.0, 0.0]), 1.0)]
    out = noncoop_step(NetworkState.zeros(1, 2), s, 0.1)
    np.testing.assert_allclose(out.W, [[0.1, 0.0]])


def test_noncoop_permutation(rng):
    W = rng.standard_normal((4, 3))
    U, d = _samples(rng, 4, 3)
    perm = np.array([2, 0, 3, 1])
    a = noncoop_step(NetworkState(0, W), (U, d), 0.05).W
    b = noncoop_step(NetworkState(0, W[perm]), (U[perm], d[perm]), 0.05).W
    np.testing.assert_array_equal(b[np.argsort(perm)], a)


def test_multitask_zero_laplacian_is_noncoop(rng):
    W = rng.standard_normal((3, 2))
    s = _samples(rng, 3, 2)
    np.testing.assert_array_equal(multitask_step(NetworkState(0, W), s, 0.1, np.zeros((3, 3))).W,
                                  noncoop_step(NetworkState(0, W), s, 0.1).W)


def test_multitask_two_node_example():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    zero = (np.zeros((2, 1)), np.zeros(2))
    out = multitask_step(NetworkState(0, np.array([[1.0], [0.0]])), zero, 0.1, L)
    np.testing.assert_allclose(out.W, [[0.9], [0.1]], atol=1e-15)


@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_multitask_dense_oracle(K, M, seed):
    r = np.random.default_rng(seed)
    A = np.triu(r.uniform(0, 2, (K, K)), 1)
    A = A + A.T
    L = np.diag(A.sum(1)) - A
    W = r.standard_normal((K, M))
    U, d = r.standard_normal((K, M)), r.standard_normal(K)
    mu = 0.07
    # literal stacked recursion with L kron I_M
    w = W.reshape(-1)
    grad = np.concatenate([-U[k] * (d[k] - U[k] @ W[k]) for k in range(K)])
    dense = (np.eye(K * M) - mu * np.kron(L, np.eye(M))) @ w - mu * grad
    out = multitask_step(NetworkState(0, W), (U, d), mu, L).stacked
    np.testing.assert_allclose(out, dense, atol=1e-12, rtol=0)


def test_multitask_preserves_average_without_gradient(net10, rng):
    W = rng.standard_normal((10, 3))
    zero = (np.zeros((10, 3)), np.zeros(10))
    out = multitask_step(NetworkState(0, W), zero, 0.01, net10.entries).W
    np.testing.assert_allclose(out.mean(axis=0), W.mean(axis=0), atol=1e-14)


def test_consensus_identity_is_noncoop(rng):
    W = rng.standard_normal((3, 2))
    s = _samples(rng, 3, 2)
    np.testing.assert_allclose(consensus_step(NetworkState(0, W), s, 0.1, np.eye(3)).W,
                               noncoop_step(NetworkState(0, W), s, 0.1).W, atol=1e-15)


def test_consensus_two_node_average():
    zero = (np.zeros((2, 1)), np.zeros(2))
    out = consensus_step(NetworkState(0, np.array([[1.0], [0.0]])), zero, 0.1, np.full((2, 2), 0.5))
    np.testing.assert_allclose(out.W, [[0.5], [0.5]])


def test_consensus_preserves_average(rng):
    topo = random_topology(8, 4, rng=np.random.default_rng(3))
    C = metropolis_weights(topo)
    W = rng.standard_normal((8, 2))
    zero = (np.zeros((8, 2)), np.zeros(8))
    out = consensus_step(NetworkState(0, W), zero, 0.1, C).W
    np.testing.assert_allclose(out.mean(axis=0), W.mean(axis=0), atol=1e-14)


def test_metropolis_weights_support():
    topo = random_topology(8, 4, rng=np.random.default_rng(3))
    C = metropolis_weights(topo)
    np.testing.assert_allclose(C.sum(0), 1)
    np.testing.assert_allclose(C, C.T)
    assert C.min() >= 0
    A = topo.adjacency()
    off = (C > 0) & ~np.eye(8, dtype=bool)
    assert np.all(A[off] > 0)


def test_consensus_rejects_bad_matrix(rng):
    with pytest.raises(ValidationError):
        consensus_step(NetworkState(0, np.zeros((2, 1))), _samples(rng, 2, 1), 0.1, np.array([[1.0, 0.5], [0.0, 0.5]]))


def test_divergence_carries_iteration():
    W = np.array([[np.inf]])
    with pytest.raises(DivergenceError) as info, np.errstate(invalid="ignore"):
        noncoop_step(NetworkState(6, W), (np.ones((1, 1)), np.ones(1)), 0.1)
    assert info.value.iteration == 7


def test_config_validation():
    with pytest.raises(ValidationError):
        LearnerConfig(0.0)
    with pytest.raises(ValidationError):
        LearnerConfig(0.1, mode="gossip")
    with pytest.raises(ValidationError):
        LearnerConfig(0.1, mode="multitask")
    with pytest.raises(ValidationError):
        LearnerConfig(0.1, mode="multitask", matrix=np.array([[1.0, 0.0], [-1.0, 1.0]]))


def _models(K=3, M=4, su2=1.0, sv2=0.1, seed=0):
    r = np.random.default_rng(seed)
    return [AgentDataModel(su2, sv2, r.standard_normal(M)) for _ in range(K)]


def test_zero_budget_returns_initial():
    res = run_learner(LearnerConfig(0.1, iterations=0), _models(), np.random.default_rng(0))
    np.testing.assert_array_equal(res.final.W, 0)
    assert res.final.iteration == 0


def test_run_learner_deterministic():
    cfg = LearnerConfig(0.05, iterations=200)
    a = run_learner(cfg, _models(), np.random.default_rng(4), recorders=[MSDRecorder(np.zeros((3, 4)))])
    b = run_learner(cfg, _models(), np.random.default_rng(4), recorders=[MSDRecorder(np.zeros((3, 4)))])
    np.testing.assert_array_equal(a.final.W, b.final.W)
    np.testing.assert_array_equal(a.records["msd"], b.records["msd"])


def test_recorder_cadence():
    tasks = np.stack([m.task for m in _models()])
    res = run_learner(LearnerConfig(0.05, iterations=25), _models(), np.random.default_rng(0),
                      recorders=[MSDRecorder(tasks)], record_every=10)
    assert res.iterations.tolist() == [0, 10, 20, 25]
    assert res.records["msd"][0] == pytest.approx(np.sum(tasks**2) / 3)


def test_steady_state_msd_matches_lms_theory():
    mu, M, sv2 = 0.01, 5, 0.1
    models = _models(K=1, M=M, su2=1.0, sv2=sv2, seed=1)
    res = run_learner(LearnerConfig(mu, iterations=30000), models, np.random.default_rng(11),
                      recorders=[MSDRecorder(np.stack([m.task for m in models]))])
    steady = res.records["msd"][5000:].mean()
    assert steady == pytest.approx(mu * M * sv2 / 2, rel=0.2)


def test_mean_dynamics_reach_regularised_minimiser(net10):
    K, M = 10, 3
    r = np.random.default_rng(2)
    su2 = r.uniform(0.8, 1.2, K)
    models = [AgentDataModel(float(su2[k]), 0.1, r.standard_normal(M)) for k in range(K)]
    W_o = np.stack([m.task for m in models])
    L = net10.entries
    mu = 0.5 * stability_limit(models, L)
    cfg = LearnerConfig(mu, mode="multitask", matrix=L, iterations=40000, exact_gradient=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_learner(cfg, models, np.random.default_rng(0))
    H = np.kron(np.diag(su2), np.eye(M))
    big_L = np.kron(L, np.eye(M))
    w_star = np.linalg.solve(H + big_L, H @ W_o.reshape(-1))
    np.testing.assert_allclose(res.final.stacked, w_star, atol=1e-8)


def test_multitask_warns_on_large_stepsize(net10):
    models = _models(K=10, M=2)
    cfg = LearnerConfig(0.05, mode="multitask", matrix=net10.entries, iterations=1)
    with pytest.warns(RuntimeWarning, match="unstable"):
        run_learner(cfg, models, np.random.default_rng(0))


def test_iteration_budget():
    models = [AgentDataModel(0.5, 0.1, np.zeros(2)), AgentDataModel(2.0, 0.1, np.zeros(2))]
    assert iteration_budget(0.01, models) == 4000
    assert iteration_budget(0.03, models) == int(np.ceil(20 / 0.015))


def test_stability_spot_check():
    topo = GraphTopology(3, ((0, 1, 1.0), (1, 2, 1.0)))
    L = build_laplacian(topo).entries
    models = _models(K=3, M=2, su2=1.0, sv2=0.1)
    mu = 0.9 * stability_limit(models, L) / 2  # also inside the LMS mean-square region for M=2
    res = run_learner(LearnerConfig(mu, mode="multitask", matrix=L, iterations=20000), models,
                      np.random.default_rng(0))
    assert np.all(np.isfinite(res.final.W))
