import dataclasses

import numpy as np
import pytest

from elrgnn import estimator as E
from elrgnn import graph as G
from elrgnn import synthetic as S
from elrgnn.gnn import GcnModel, cross_entropy, gcn_backward, gcn_forward
from elrgnn.linalg import SvdConfig, full_svd_oracle
from fd import central, instance, rel_err

J4 = np.ones((4, 4))


def small_cfg(**kw):
    return E.TrainConfig(**{"d": 2, "epsilon": 0.05, "epochs": 30, "hidden": 8, **kw})


def test_coarse_init_rank_one_all_ones():
    f = E.coarse_init(J4, 1, SvdConfig(1, oversample=3))
    np.testing.assert_allclose(f.s, [4.0])
    np.testing.assert_allclose(E.reconstruct(f), J4, atol=1e-12)


def test_coarse_init_sbm_is_best_rank_two():
    g = S.sbm_graph(seed=2)
    f = E.coarse_init(g.adjacency, 2, SvdConfig(2))
    dense = g.adjacency.toarray()
    oracle = full_svd_oracle(dense)
    best = np.sqrt(np.sum(oracle.values[2:] ** 2))
    assert np.linalg.norm(dense - E.reconstruct(f)) <= best + 1e-6


def test_coarse_init_full_rank_psd():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(10, 10))
    A = M @ M.T
    f = E.coarse_init(A, 10, SvdConfig(10, oversample=0))
    assert np.linalg.norm(A - E.reconstruct(f)) <= 1e-6


def test_reconstruct_examples():
    np.testing.assert_array_equal(E.reconstruct(E.LowRankFactor(np.ones((2, 1)), [1.0])), np.ones((2, 2)))
    np.testing.assert_array_equal(E.reconstruct(E.LowRankFactor(np.zeros((3, 2)), [2.0, 1.0])), np.zeros((3, 3)))
    rng = np.random.default_rng(0)
    f = E.LowRankFactor(rng.normal(size=(6, 2)), [3.0, 0.5])
    lam = f.lam()
    oracle = np.array([[sum(lam[i, k] * lam[j, k] for k in range(2)) for j in range(6)] for i in range(6)])
    np.testing.assert_allclose(E.reconstruct(f), oracle, rtol=0, atol=1e-13)


def test_reconstruct_cap(monkeypatch):
    monkeypatch.setattr(E, "DENSE_CAP", 3)
    with pytest.raises(ValueError, match="capped"):
        E.reconstruct(E.LowRankFactor(np.ones((4, 1)), [1.0]))


def test_factor_rejects_increasing_values():
    with pytest.raises(ValueError):
        E.LowRankFactor(np.ones((3, 2)), [1.0, 2.0])


def test_prune_examples():
    out = E.prune(np.array([[1.0, 0.4], [0.4, 1.0]]), 0.5)
    np.testing.assert_array_equal(out.toarray(), np.eye(2))
    out = E.prune(np.array([[1.0, -0.3], [-0.3, 0.0]]), 0.0)
    assert out.nnz == 1
    rng = np.random.default_rng(1)
    M = rng.random((9, 9))
    got = set(zip(*E.prune(M, 0.2).nonzero()))
    assert got == {(i, j) for i in range(9) for j in range(9) if M[i, j] >= 0.2}


def test_pruned_gram_equals_prune_of_reconstruct():
    rng = np.random.default_rng(2)
    f = E.LowRankFactor(rng.normal(size=(600, 3)), [2.0, 1.0, 0.5])
    a = E._pruned_gram(f.lam(), 0.1)
    b = E.prune(E.reconstruct(f), 0.1)
    assert (a != b).nnz == 0
    assert G.is_symmetric(a)


def test_normalized_estimate_rank_one():
    f = E.coarse_init(J4, 1, SvdConfig(1, oversample=3))
    est = E.build_normalized_estimate(f, 0.5)
    np.testing.assert_allclose(est.a_tilde.toarray(), J4 / 4, atol=1e-12)
    assert G.is_symmetric(est.a_tilde)


def test_normalized_estimate_empty_when_epsilon_huge():
    f = E.LowRankFactor(np.ones((3, 1)), [1.0])
    est = E.build_normalized_estimate(f, 10.0)
    assert est.a_tilde.nnz == 0 and est.pruned.nnz == 0


def test_sim_loss_examples():
    A = G.build_symmetric(3, [(0, 1), (1, 2, 2.0)])
    assert E.sim_loss(A, A) == 0.0
    B = G.build_symmetric(3, [(0, 2, 0.5)])
    assert E.sim_loss(G.empty(3), B) == pytest.approx(2 * 0.25)
    assert E.sim_loss(A, B) == pytest.approx(np.sum((A.toarray() - B.toarray()) ** 2), abs=1e-12)


def test_fr_loss_examples():
    assert E.fr_loss(E.LowRankFactor(np.array([[1.0], [0.0]]), [4.0])) == pytest.approx(4.0)
    assert E.fr_loss(E.LowRankFactor(np.zeros((3, 2)), [1.0, 1.0])) == 0.0
    rng = np.random.default_rng(3)
    u, s = rng.normal(size=(7, 3)), np.array([3.0, 2.0, 1.0])
    assert E.fr_loss(E.LowRankFactor(u, s)) == pytest.approx(sum(s[k] * u[:, k] @ u[:, k] for k in range(3)), rel=1e-12)


def test_u_gradient_flat_when_weights_zero():
    A, _, X, _, _, _ = instance(0, n=8)
    labels = np.arange(8) % 2
    f = E.coarse_init(A, 2, SvdConfig(2, oversample=2))
    est = E.build_normalized_estimate(f, 0.0)
    model = GcnModel(np.zeros((X.shape[1], 4)), np.zeros((4, 2)))
    grads = gcn_backward(gcn_forward(X, est.a_tilde, model), X, est.a_tilde, model, labels, np.arange(8))
    g = E.u_gradient(A, f, est, grads.adjacency(*est.support), 0.0, 0.0)
    assert np.abs(g).max() <= 1e-8


def test_u_gradient_frobenius_term():
    rng = np.random.default_rng(5)
    f = E.LowRankFactor(rng.normal(size=(6, 2)), [2.0, 1.0])
    est = E.build_normalized_estimate(f, 1e9)  # empty support isolates the Fr term
    g = E.u_gradient(G.empty(6), f, est, np.zeros(0), 0.0, 1.0)
    np.testing.assert_allclose(g, 2 * f.u * f.s, rtol=1e-14)
    num = central(lambda: E.fr_loss(f), f.u, (3, 1))
    assert rel_err(g[3, 1], num) <= 1e-6


def _frozen_loss(A, X, labels, train, model, factor, est, lambda_sim, lambda_fr, target):
    """Total loss with the prune mask and degree scaling frozen at ``est``."""
    rows, cols = est.support
    scale = est.scale
    pruned_vals = np.einsum("ij,ij->i", factor.lam()[rows], factor.lam()[cols])
    a_tilde_vals = pruned_vals * scale[rows] * scale[cols]
    a_tilde = type(est.pruned)((a_tilde_vals, est.pruned.indices, est.pruned.indptr), shape=est.pruned.shape)
    ce = cross_entropy(gcn_forward(X, a_tilde, model).probs, labels, train)
    if target == "normalized":
        other = a_tilde
    else:
        other = type(est.pruned)((pruned_vals, est.pruned.indices, est.pruned.indptr), shape=est.pruned.shape)
    return ce + lambda_sim * E.sim_loss(A, other) + lambda_fr * E.fr_loss(factor)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("target", ["normalized", "pruned"])
def test_u_gradient_matches_masked_finite_differences(seed, target):
    A, _, X, labels, model, train = instance(seed, n=10)
    f = E.coarse_init(A, 3, SvdConfig(3, oversample=2, seed=seed))
    eps = 0.05
    est = E.build_normalized_estimate(f, eps)
    grads = gcn_backward(gcn_forward(X, est.a_tilde, model), X, est.a_tilde, model, labels, train)
    g = E.u_gradient(A, f, est, grads.adjacency(*est.support), 0.7, 0.3, target)

    def loss():
        return _frozen_loss(A, X, labels, train, model, f, est, 0.7, 0.3, target)

    def mask_stable(idx, h=1e-6):
        old = f.u[idx]
        ok = True
        for delta in (h, -h):
            f.u[idx] = old + delta
            moved = E.build_normalized_estimate(f, eps).pruned
            ok &= np.array_equal(moved.indices, est.pruned.indices)
            ok &= np.array_equal(moved.indptr, est.pruned.indptr)
        f.u[idx] = old
        return ok

    checked = 0
    for idx in np.ndindex(f.u.shape):
        if not mask_stable(idx):
            continue
        assert rel_err(g[idx], central(loss, f.u, idx), floor=1e-7) <= 1e-4, idx
        checked += 1
    assert checked >= f.u.size // 2


def test_ablation_variant_mapping():
    base = small_cfg()
    assert E.ablation_variant(base, "no_sim").lambda_sim == 0.0
    assert E.ablation_variant(base, "no_fr").lambda_fr == 0.0
    assert E.ablation_variant(base, "eps_zero").epsilon == 0.0
    assert E.ablation_variant(base, "rand_init").variant == "rand_init"
    with pytest.raises(ValueError):
        E.ablation_variant(base, "bogus")


def test_config_problems_are_exhaustive():
    cfg = E.TrainConfig(d=0, epsilon=-1.0, u_lr=float("nan"), ce_mode="median")
    assert len(cfg.problems(10)) == 4
    with pytest.raises(ValueError):
        cfg.validate(10)
    assert E.TrainConfig(d=11).problems(10)


@pytest.fixture(scope="module")
def sbm():
    g = S.sbm_graph(n=60, seed=0, features="noisy")
    return g, G.random_split(g.labels, 0)


def test_train_keeps_s_frozen_and_estimate_symmetric(sbm):
    g, split = sbm
    tm = E.train(g, split, small_cfg())
    init = E.coarse_init(g.adjacency, 2, small_cfg().svd_config(60))
    np.testing.assert_array_equal(tm.factor.s, init.s)
    assert G.is_symmetric(tm.a_tilde)
    assert len(tm.history["ce"]) == 30 and len(tm.history["val_acc"]) == 31


def test_train_is_deterministic(sbm):
    g, split = sbm
    for variant in ("none", "joint_update", "rand_init"):
        cfg = E.ablation_variant(small_cfg(), variant)
        a, b = E.train(g, split, cfg), E.train(g, split, cfg)
        np.testing.assert_array_equal(a.model.w1, b.model.w1)
        np.testing.assert_array_equal(a.factor.u, b.factor.u)


def test_joint_update_differs_from_alternating(sbm):
    g, split = sbm
    a = E.train(g, split, small_cfg(select_best_val=False))
    b = E.train(g, split, small_cfg(select_best_val=False, variant="joint_update"))
    assert not np.array_equal(a.factor.u, b.factor.u)


def test_degenerate_epsilon_runs(sbm):
    g, split = sbm
    tm = E.train(g, split, small_cfg(epsilon=1e6))
    assert tm.a_tilde.nnz == 0
    assert 0.0 <= tm.evaluate(g, split.test) <= 1.0


def test_select_final_returns_last_epoch(sbm):
    g, split = sbm
    tm = E.train(g, split, small_cfg(select_best_val=False))
    assert tm.best_epoch == 30


def test_training_loss_decreases_over_windows():
    g = S.sbm_graph(n=80, seed=3, features="noisy")
    split = G.random_split(g.labels, 3)
    tm = E.train(g, split, small_cfg(epochs=100, u_lr=1e-4))
    ce = np.array(tm.history["ce"])
    assert ce[50:100].mean() < ce[0:50].mean()


def test_reduces_to_svd_baseline(sbm):
    g, split = sbm
    cfg = small_cfg(lambda_sim=0.0, lambda_fr=0.0, epsilon=0.0, u_lr=0.0)
    a, b = E.train(g, split, cfg), E.svd_baseline_train(g, split, cfg)
    np.testing.assert_array_equal(a.model.w1, b.model.w1)
    np.testing.assert_array_equal(a.model.w2, b.model.w2)


def test_divergence_guard(sbm):
    g, split = sbm
    with pytest.raises(FloatingPointError, match="epoch"):
        E.train(g, split, small_cfg(u_lr=1e12, select_best_val=False))


def test_rejects_unlabeled_training_nodes(sbm):
    g, split = sbm
    labels = g.labels.copy()
    labels[split.train[0]] = G.UNLABELED
    with pytest.raises(ValueError):
        E.fit("gcn", G.SparseGraph(g.adjacency, labels, 2, g.features), split, small_cfg())
    with pytest.raises(ValueError):
        E.fit("nope", g, split, small_cfg())


def test_trained_model_predict_rows_sum_to_one(sbm):
    g, split = sbm
    for method in E.METHODS:
        tm = E.fit(method, g, split, dataclasses.replace(small_cfg(), epochs=5))
        P = tm.predict(g.feature_matrix())
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        assert tm.preprocess_s >= 0 and tm.train_s >= 0
