"""Acceptance checks. Each test prints one ``CRITERION n ... PASS|FAIL`` line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""
import dataclasses
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

from elrgnn import estimator as E
from elrgnn import experiments as X
from elrgnn import graph as G
from elrgnn import linalg as L
from elrgnn import synthetic as S
from elrgnn.gnn import cross_entropy, gcn_backward, gcn_forward
from conftest import CRITERIA
from fd import central, instance, rel_err, with_value

pytestmark = pytest.mark.slow

SEEDS = range(5)


def report(n, title, ok, detail):
    line = f"CRITERION {n} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    CRITERIA.append(line)
    return ok


# 1 -------------------------------------------------------------------------

def test_criterion_1_clean_cora():
    path = X.cora_manifest()
    if path is None:
        ok = report(1, "clean Cora", False, f"no Cora data; import it and set ${X.CORA_ENV}")
        assert ok, "Cora data unavailable"
    gcn = 100 * np.mean(X.cora_runs("gcn", X.CITATION_GCN))
    elr = 100 * np.mean(X.cora_runs("elr", X.CITATION_ELR))
    ok = abs(gcn - 83.5) <= 2.0 and abs(elr - 80.7) <= 2.0
    assert report(1, "clean Cora", ok, f"GCN {gcn:.2f} vs 83.5+-2.0, ELR {elr:.2f} vs 80.7+-2.0")


# 2 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def robustness():
    t0 = time.monotonic()
    out = {}
    for kind, rate in (("dice", 0.25), ("random", 1.0)):
        out[kind] = (X.sbm_cell("gcn", X.SBM_GCN, kind, rate), X.sbm_cell("elr", X.SBM_ELR, kind, rate))
    return out, time.monotonic() - t0


def test_criterion_2_sbm_robustness(robustness):
    cells, seconds = robustness
    gains = {k: 100 * (elr.mean - gcn.mean) for k, (gcn, elr) in cells.items()}
    ok = gains["dice"] >= 8.0 and gains["random"] >= 5.0 and seconds <= 15 * 60
    detail = ", ".join(
        f"{k}: GCN {100 * g.mean:.1f} ELR {100 * e.mean:.1f} gain {gains[k]:+.1f}" for k, (g, e) in cells.items())
    assert report(2, "SBM robustness", ok, f"{detail}; need dice >= +8, random >= +5; {seconds:.0f}s")


# 3 -------------------------------------------------------------------------

def gapped_matrices(count=20, n=50, d=10, gap=0.1):
    seed = 0
    while count:
        rng = np.random.default_rng(seed)
        M = sp.random_array((n, n), density=0.2, rng=rng, format="csr")
        A = (M + M.T).toarray()
        oracle = L.full_svd_oracle(A)
        if oracle.values[d - 1] - oracle.values[d] >= gap:
            count -= 1
            yield A, oracle
        seed += 1


def svd_errors(cfg):
    worst_value, worst_recon = 0.0, 0.0
    for A, oracle in gapped_matrices(d=cfg.d):
        res = L.truncated_svd(A, cfg)
        top = oracle.values[: cfg.d]
        worst_value = max(worst_value, float(np.max(np.abs(res.values - top) / top)))
        best = np.sqrt(np.sum(oracle.values[cfg.d :] ** 2))
        worst_recon = max(worst_recon, np.linalg.norm(A - res.reconstruct()) / best - 1.0)
    return worst_value, worst_recon


def test_criterion_3_svd_oracle():
    value_err, recon_excess = svd_errors(L.SvdConfig(10))
    deep, _ = svd_errors(L.SvdConfig(10, power_iters=20))
    ok = value_err <= 1e-6 and recon_excess <= 1e-3
    assert report(3, "SVD oracle", ok,
                  f"default sketch: max value rel err {value_err:.2e} (<= 1e-6), "
                  f"reconstruction excess {recon_excess:.2e} (<= 1e-3); with 20 power iters {deep:.2e}")


# 4 -------------------------------------------------------------------------

def weight_errors(seed):
    _, a_norm, Xf, labels, model, train = instance(seed)
    grads = gcn_backward(gcn_forward(Xf, a_norm, model), Xf, a_norm, model, labels, train)

    def loss():
        return cross_entropy(gcn_forward(Xf, a_norm, model).probs, labels, train)

    worst = 0.0
    for name, g in (("w1", grads.w1), ("w2", grads.w2)):
        W = getattr(model, name)
        worst = max(worst, max(rel_err(g[i], central(loss, W, i)) for i in np.ndindex(W.shape)))
    return worst


def adjacency_errors(seed, h=1e-6):
    _, a_norm, Xf, labels, model, train = instance(seed)
    grads = gcn_backward(gcn_forward(Xf, a_norm, model), Xf, a_norm, model, labels, train)
    rows = np.repeat(np.arange(a_norm.shape[0]), np.diff(a_norm.indptr))
    analytic = grads.adjacency(rows, a_norm.indices)
    worst = 0.0
    for k in range(a_norm.nnz):
        v = a_norm.data[k]
        up = cross_entropy(gcn_forward(Xf, with_value(a_norm, k, v + h), model).probs, labels, train)
        down = cross_entropy(gcn_forward(Xf, with_value(a_norm, k, v - h), model).probs, labels, train)
        worst = max(worst, rel_err(analytic[k], (up - down) / (2 * h)))
    return worst


def factor_errors(seed, target, eps=0.05, h=1e-6):
    from test_estimator import _frozen_loss

    A, _, Xf, labels, model, train = instance(seed, n=10)
    f = E.coarse_init(A, 3, L.SvdConfig(3, oversample=2, seed=seed))
    est = E.build_normalized_estimate(f, eps)
    grads = gcn_backward(gcn_forward(Xf, est.a_tilde, model), Xf, est.a_tilde, model, labels, train)
    g = E.u_gradient(A, f, est, grads.adjacency(*est.support), 0.7, 0.3, target)

    def loss():
        return _frozen_loss(A, Xf, labels, train, model, f, est, 0.7, 0.3, target)

    def stable(idx):
        old, same = f.u[idx], True
        for delta in (h, -h):
            f.u[idx] = old + delta
            moved = E.build_normalized_estimate(f, eps).pruned
            same &= np.array_equal(moved.indices, est.pruned.indices) and np.array_equal(moved.indptr, est.pruned.indptr)
        f.u[idx] = old
        return same

    errs = [rel_err(g[i], central(loss, f.u, i), floor=1e-7) for i in np.ndindex(f.u.shape) if stable(i)]
    return max(errs), len(errs)


def test_criterion_4_gradients():
    w = max(weight_errors(s) for s in SEEDS)
    a = max(adjacency_errors(s) for s in SEEDS)
    u_runs = [factor_errors(s, t) for s in SEEDS for t in ("normalized", "pruned")]
    u = max(e for e, _ in u_runs)
    checked = sum(c for _, c in u_runs)
    ok = w <= 1e-5 and a <= 1e-4 and u <= 1e-4 and checked > 0
    assert report(4, "gradients", ok,
                  f"W1/W2 {w:.1e} (<= 1e-5), adjacency {a:.1e}, U {u:.1e} over {checked} mask-stable entries (<= 1e-4)")


# 5 -------------------------------------------------------------------------

def test_criterion_5_invariants():
    import test_properties as P

    names = [n for n in dir(P) if n.startswith("test_")]
    failed = []
    for name in names:
        try:
            getattr(P, name)()
        except Exception as exc:  # report every failing property, not just the first
            failed.append(f"{name}: {type(exc).__name__}")
    ok = not failed
    detail = f"{len(names) - len(failed)}/{len(names)} properties, 200 cases each"
    assert report(5, "structural invariants", ok, detail + ("; " + "; ".join(failed) if failed else ""))


# 6 -------------------------------------------------------------------------

def test_criterion_6_reduction():
    cfg = E.TrainConfig(d=2, lambda_sim=0.0, lambda_fr=0.0, epsilon=0.0, u_lr=0.0, epochs=200)
    same = []
    for seed in SEEDS:
        graph, split = X.sbm_instance("dice", 0.25, seed)
        run = dataclasses.replace(cfg, seed=seed)
        a, b = E.train(graph, split, run), E.svd_baseline_train(graph, split, run)
        same.append(np.array_equal(a.model.w1, b.model.w1) and np.array_equal(a.model.w2, b.model.w2))
    assert report(6, "reduction to SVD baseline", all(same), f"{sum(same)}/{len(same)} seeds bit-identical")


# 7 -------------------------------------------------------------------------

def test_criterion_7_efficiency():
    graph = S.citation_like()
    split = G.random_split(graph.labels, 0)
    res = X.efficiency(graph, split, X.CITATION_ELR, X.CITATION_GCN)
    parts_ok = all(0 <= r["preprocess_s"] and 0 <= r["train_s"] <= r["total_s"] for r in (res["gcn"], res["elr"]))
    ok = parts_ok and res["ratio"] <= 5.0
    g, e = res["gcn"], res["elr"]
    assert report(7, "efficiency", ok,
                  f"{res['epochs']} epochs on N={graph.n_nodes}: GCN total {g['total_s']:.1f}s, "
                  f"ELR preprocess {e['preprocess_s']:.1f}s train {e['train_s']:.1f}s total {e['total_s']:.1f}s, "
                  f"ratio {res['ratio']:.2f} (<= 5)")


# 8 -------------------------------------------------------------------------

def test_criterion_8_ablation(robustness):
    full = robustness[0]["dice"][1]
    rand = X.sbm_cell("elr", X.SBM_ELR, "dice", 0.25, variant="rand_init")
    no_sim = X.sbm_cell("elr", X.SBM_ELR, "dice", 0.25, variant="no_sim")
    ok = full.mean - rand.mean >= 0.10 and no_sim.mean < full.mean
    assert report(8, "ablation ordering", ok,
                  f"full {100 * full.mean:.1f}, rand_init {100 * rand.mean:.1f} (>= 10 below), "
                  f"no_sim {100 * no_sim.mean:.1f} (below full)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
