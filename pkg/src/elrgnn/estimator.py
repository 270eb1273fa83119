"""Low-rank sparse adjacency estimation trained jointly with a GCN.

The adjacency estimate is ``A_d = L L^T`` with ``L = U diag(sqrt(s))``:
``s`` holds the top singular values of the input adjacency and stays fixed,
``U`` starts at the matching singular vectors and is learned. Each epoch the
estimate is rebuilt, entries below ``epsilon`` are dropped, and the result is
symmetrically normalized before it feeds the GCN.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import graph as G
from .gnn import Adam, GcnModel, SgdMomentum, accuracy, cross_entropy, gcn_backward, gcn_forward
from .linalg import SvdConfig, frobenius_sq, truncated_svd

logger = logging.getLogger(__name__)

DENSE_CAP = 20_000
GRAM_BLOCK = 256
VARIANTS = ("none", "no_sim", "no_fr", "eps_zero", "rand_init", "joint_update")


@dataclass(frozen=True)
class TrainConfig:
    d: int = 50
    epsilon: float = 0.01
    lambda_sim: float = 1.0
    lambda_fr: float = 1e-3
    epochs: int = 1000
    gnn_lr: float = 1e-2
    gnn_weight_decay: float = 5e-4
    u_lr: float = 1e-2
    momentum: float = 0.9
    hidden: int = 16
    seed: int = 0
    ce_mode: str = "mean"
    select_best_val: bool = True
    variant: str = "none"
    # "normalized" compares A with the normalized estimate, "pruned" with the
    # pruned estimate before normalization
    sim_target: str = "normalized"
    normalize_features: bool = True
    oversample: int = 10
    power_iters: int = 8

    def problems(self, n_nodes: Optional[int] = None) -> list[str]:
        """Every violated constraint, for exhaustive reporting."""
        out = []
        if self.d < 1:
            out.append(f"d must be >= 1 (got {self.d})")
        if n_nodes is not None and self.d > n_nodes:
            out.append(f"d must be <= number of nodes {n_nodes} (got {self.d})")
        for name in ("epsilon", "lambda_sim", "lambda_fr", "gnn_lr", "gnn_weight_decay", "u_lr", "momentum"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                out.append(f"{name} must be a finite value >= 0 (got {value})")
        if self.epochs < 0:
            out.append(f"epochs must be >= 0 (got {self.epochs})")
        if self.hidden < 1:
            out.append(f"hidden must be >= 1 (got {self.hidden})")
        if self.ce_mode not in ("mean", "sum"):
            out.append(f"ce_mode must be 'mean' or 'sum' (got {self.ce_mode!r})")
        if self.variant not in VARIANTS:
            out.append(f"variant must be one of {VARIANTS} (got {self.variant!r})")
        if self.sim_target not in ("normalized", "pruned"):
            out.append(f"sim_target must be 'normalized' or 'pruned' (got {self.sim_target!r})")
        return out

    def validate(self, n_nodes: Optional[int] = None) -> None:
        problems = self.problems(n_nodes)
        if problems:
            raise ValueError("; ".join(problems))

    def svd_config(self, n_nodes: int) -> SvdConfig:
        # small graphs cannot afford the full oversampling budget
        oversample = max(0, min(self.oversample, n_nodes - self.d))
        return SvdConfig(self.d, oversample, self.power_iters, self.seed)


def ablation_variant(cfg: TrainConfig, variant: str) -> TrainConfig:
    """Config for one ablation of the full method.

    ``rand_init`` and ``joint_update`` change trainer behaviour and are
    carried in ``cfg.variant``; the others only zero a hyperparameter.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    changes: dict = {"variant": variant}
    if variant == "no_sim":
        changes["lambda_sim"] = 0.0
    elif variant == "no_fr":
        changes["lambda_fr"] = 0.0
    elif variant == "eps_zero":
        changes["epsilon"] = 0.0
    return dataclasses.replace(cfg, **changes)


class LowRankFactor:
    """Learnable ``U`` (n x d) with frozen singular values ``s``."""

    def __init__(self, u: np.ndarray, s: np.ndarray):
        s = np.array(s, dtype=np.float64)
        if s.ndim != 1 or u.shape[1] != len(s):
            raise ValueError(f"u has shape {u.shape} but s has {s.shape}")
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise ValueError("singular values must be non-negative and non-increasing")
        s.setflags(write=False)
        self.u = np.array(u, dtype=np.float64)
        self.s = s
        self.sqrt_s = np.sqrt(s)
        self.sqrt_s.setflags(write=False)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def d(self) -> int:
        return self.u.shape[1]

    def lam(self) -> np.ndarray:
        return self.u * self.sqrt_s

    def copy(self) -> "LowRankFactor":
        return LowRankFactor(self.u.copy(), self.s)


def coarse_init(A: sp.csr_array, d: int, svd_cfg: Optional[SvdConfig] = None) -> LowRankFactor:
    n = A.shape[0]
    if d > n:
        raise ValueError(f"rank {d} exceeds {n} nodes")
    cfg = svd_cfg or SvdConfig(d, oversample=min(10, n - d))
    if cfg.d != d:
        cfg = dataclasses.replace(cfg, d=d)
    res = truncated_svd(A, cfg)
    return LowRankFactor(res.vectors, res.values)


def random_init(n: int, d: int, rng: np.random.Generator) -> LowRankFactor:
    """Xavier-normal ``U`` with unit singular values."""
    std = np.sqrt(2.0 / (n + d))
    return LowRankFactor(rng.normal(0.0, std, size=(n, d)), np.ones(d))


def _gram_blocks(lam: np.ndarray, block: int = GRAM_BLOCK):
    """Upper block rows of ``lam @ lam.T``: yields ``(start, lam[start:stop] @ lam[start:].T)``.

    Only entries on or above the diagonal are used by callers; the lower
    triangle is mirrored, which makes the result exactly symmetric.
    """
    n = lam.shape[0]
    for start in range(0, n, block):
        stop = min(start + block, n)
        yield start, lam[start:stop] @ lam[start:].T


def reconstruct(factor: LowRankFactor) -> np.ndarray:
    n = factor.n
    if n > DENSE_CAP:
        raise ValueError(f"dense reconstruction capped at {DENSE_CAP} nodes, got {n}")
    out = np.zeros((n, n))
    for start, block in _gram_blocks(factor.lam()):
        out[start : start + block.shape[0], start:] = block
    upper = np.triu(out)
    return upper + np.triu(upper, 1).T


def prune(a_d: np.ndarray, epsilon: float) -> sp.csr_array:
    """Keep entries ``>= epsilon``; zeros are never stored."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    keep = (a_d >= epsilon) & (a_d != 0.0)
    rows, cols = np.nonzero(keep)
    return G.from_arrays(a_d.shape[0], rows, cols, a_d[rows, cols])


def _pruned_gram(lam: np.ndarray, epsilon: float) -> sp.csr_array:
    """``prune(reconstruct(...))`` without materializing the dense matrix."""
    n = lam.shape[0]
    if n > DENSE_CAP:
        raise ValueError(f"low-rank estimate capped at {DENSE_CAP} nodes, got {n}")
    rows, cols, vals = [], [], []
    for start, block in _gram_blocks(lam):
        flat = np.flatnonzero((block >= epsilon) & (block != 0.0))
        r, c = np.divmod(flat, block.shape[1])
        upper = c >= r  # block column c is global column start + c
        r, c = r[upper], c[upper]
        rows.append(r + start)
        cols.append(c + start)
        vals.append(block[r, c])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = rows != cols
    return G.from_arrays(
        n,
        np.concatenate([rows, cols[off]]),
        np.concatenate([cols, rows[off]]),
        np.concatenate([vals, vals[off]]),
    )


@dataclass
class Estimate:
    """Pruned low-rank adjacency and its normalized form.

    ``support`` (the pruned entries, in CSR order) is where gradients with
    respect to the estimate are non-zero.
    """

    pruned: sp.csr_array
    a_tilde: sp.csr_array
    scale: np.ndarray  # D^-1/2 of the pruned estimate

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.repeat(np.arange(self.pruned.shape[0]), np.diff(self.pruned.indptr))
        return rows, self.pruned.indices

    def normalized_on_support(self) -> np.ndarray:
        rows, cols = self.support
        return self.pruned.data * (self.scale[rows] * self.scale[cols])


def build_normalized_estimate(factor: LowRankFactor, epsilon: float) -> Estimate:
    pruned = _pruned_gram(factor.lam(), epsilon)
    return Estimate(pruned, G.sym_normalize(pruned), G.inv_sqrt_degree(pruned))


def sim_loss(A: sp.csr_array, a_tilde: sp.csr_array) -> float:
    return frobenius_sq((A - a_tilde).tocsr())


def fr_loss(factor: LowRankFactor) -> float:
    return frobenius_sq(factor.lam())


def u_gradient(
    A: sp.csr_array,
    factor: LowRankFactor,
    est: Estimate,
    ce_adjacency_grad: np.ndarray,
    lambda_sim: float,
    lambda_fr: float,
    sim_target: str = "normalized",
) -> np.ndarray:
    """Gradient of ``CE + lambda_sim * Sim + lambda_fr * Fr`` with respect to ``U``.

    ``ce_adjacency_grad`` is dCE/dA_tilde on ``est.support``. Pruning passes
    gradient only through surviving entries and the degree scaling is held
    constant, so dL/dA_d = dL/dA_tilde * r_i * r_j on the support.
    """
    rows, cols = est.support
    rr = est.scale[rows] * est.scale[cols]
    g_tilde = np.array(ce_adjacency_grad, dtype=np.float64)
    target = G.values_at(A, rows, cols) if lambda_sim else None
    if lambda_sim and sim_target == "normalized":
        g_tilde += lambda_sim * 2.0 * (est.normalized_on_support() - target)
    g_ad = g_tilde * rr
    if lambda_sim and sim_target == "pruned":
        g_ad += lambda_sim * 2.0 * (est.pruned.data - target)
    g = sp.csr_array((g_ad, est.pruned.indices, est.pruned.indptr), shape=est.pruned.shape)
    lam = factor.lam()
    d_lam = g @ lam + g.T @ lam
    grad = d_lam * factor.sqrt_s
    if lambda_fr:
        grad += lambda_fr * 2.0 * factor.u * factor.s
    return grad


def row_normalize(X: np.ndarray) -> np.ndarray:
    sums = np.abs(X).sum(axis=1, keepdims=True)
    return X / np.where(sums > 0, sums, 1.0)


@dataclass
class TrainedModel:
    method: str
    config: TrainConfig
    model: GcnModel
    a_tilde: sp.csr_array
    factor: Optional[LowRankFactor] = None
    history: dict = field(default_factory=dict)
    best_epoch: int = -1
    preprocess_s: float = 0.0
    train_s: float = 0.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.config.normalize_features:
            X = row_normalize(X)
        return gcn_forward(X, self.a_tilde, self.model).probs

    def evaluate(self, graph: G.SparseGraph, ids: np.ndarray) -> float:
        return accuracy(self.predict(graph.feature_matrix()), graph.labels, ids)


def _check_inputs(graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig) -> np.ndarray:
    cfg.validate(graph.n_nodes)
    split.check_nodes(graph.n_nodes)
    if np.any(graph.labels[split.train] == G.UNLABELED):
        raise ValueError("train split contains unlabeled nodes")
    if np.any(graph.labels[split.val] == G.UNLABELED):
        raise ValueError("validation split contains unlabeled nodes")
    X = graph.feature_matrix()
    return row_normalize(X) if cfg.normalize_features else X


def _init_model(graph: G.SparseGraph, cfg: TrainConfig) -> GcnModel:
    rng = np.random.default_rng([cfg.seed, 1])
    return GcnModel.glorot(graph.n_features, cfg.hidden, graph.n_classes, rng)


class _Selector:
    """Tracks the best-validation parameters (first occurrence wins)."""

    def __init__(self, graph, split, cfg):
        self.labels = graph.labels
        self.val = split.val
        self.enabled = cfg.select_best_val and len(split.val) > 0
        self.best = -1.0
        self.epoch = -1
        self.state = None

    def record(self, epoch, probs, history, state):
        acc = accuracy(probs, self.labels, self.val) if len(self.val) else float("nan")
        history["val_acc"].append(acc)
        if self.enabled and acc > self.best:
            self.best, self.epoch, self.state = acc, epoch, state()
        elif not self.enabled:
            self.epoch, self.state = epoch, None


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite {what} at epoch {epoch}")


def _forward(X, a_norm, model, epoch):
    try:
        return gcn_forward(X, a_norm, model)
    except FloatingPointError as exc:
        raise FloatingPointError(f"{exc} at epoch {epoch}") from None


def _fit_fixed(
    method: str,
    graph: G.SparseGraph,
    split: G.NodeSplit,
    cfg: TrainConfig,
    X: np.ndarray,
    a_norm: sp.csr_array,
    factor: Optional[LowRankFactor],
    t0: float,
    preprocess_s: float,
) -> TrainedModel:
    model = _init_model(graph, cfg)
    opt = Adam(cfg.gnn_lr, cfg.gnn_weight_decay)
    history = {"ce": [], "val_acc": []}
    select = _Selector(graph, split, cfg)
    labels = graph.labels
    for epoch in range(cfg.epochs + 1):
        trace = _forward(X, a_norm, model, epoch)
        select.record(epoch, trace.probs, history, model.copy)
        if epoch == cfg.epochs:
            break
        ce = cross_entropy(trace.probs, labels, split.train, cfg.ce_mode)
        _check_finite(ce, "cross-entropy", epoch)
        history["ce"].append(ce)
        grads = gcn_backward(trace, X, a_norm, model, labels, split.train, cfg.ce_mode)
        opt.step(model.params(), {"w1": grads.w1, "w2": grads.w2})
    if select.state is not None:
        model = select.state
    train_s = time.perf_counter() - t0 - preprocess_s
    return TrainedModel(method, cfg, model, a_norm, factor, history, select.epoch, preprocess_s, train_s)


def gcn_train(graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig) -> TrainedModel:
    """Plain GCN on the renormalized ``A + I``."""
    t0 = time.perf_counter()
    X = _check_inputs(graph, split, cfg)
    a_norm = G.sym_normalize(graph.adjacency, add_self_loops=True)
    pre = time.perf_counter() - t0
    return _fit_fixed("gcn", graph, split, cfg, X, a_norm, None, t0, pre)


def svd_baseline_train(graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig) -> TrainedModel:
    """One-shot truncated-SVD estimate (pruned at zero), then a plain GCN on it."""
    t0 = time.perf_counter()
    X = _check_inputs(graph, split, cfg)
    factor = coarse_init(graph.adjacency, cfg.d, cfg.svd_config(graph.n_nodes))
    est = build_normalized_estimate(factor, 0.0)
    pre = time.perf_counter() - t0
    return _fit_fixed("gcn-svd", graph, split, cfg, X, est.a_tilde, factor, t0, pre)


def train(graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig) -> TrainedModel:
    """Alternating optimization of the GCN weights and the low-rank factor.

    Per epoch: rebuild the estimate from the current factor and take one Adam
    step on the cross-entropy; then, with the new weights, take one momentum
    SGD step on the factor against the full regularized loss. The
    ``joint_update`` variant takes both steps from one shared forward pass.
    """
    t0 = time.perf_counter()
    X = _check_inputs(graph, split, cfg)
    A = graph.adjacency
    if cfg.variant == "rand_init":
        factor = random_init(graph.n_nodes, cfg.d, np.random.default_rng([cfg.seed, 2]))
    else:
        factor = coarse_init(A, cfg.d, cfg.svd_config(graph.n_nodes))
    pre = time.perf_counter() - t0

    model = _init_model(graph, cfg)
    theta_opt = Adam(cfg.gnn_lr, cfg.gnn_weight_decay)
    u_opt = SgdMomentum(cfg.u_lr, cfg.momentum)
    labels, train_ids = graph.labels, split.train
    history = {"ce": [], "sim": [], "fr": [], "nnz": [], "val_acc": []}
    select = _Selector(graph, split, cfg)
    joint = cfg.variant == "joint_update"

    def u_step(est, trace, need_weights):
        grads = gcn_backward(trace, X, est.a_tilde, model, labels, train_ids, cfg.ce_mode, need_weights)
        rows, cols = est.support
        return u_gradient(
            A, factor, est, grads.adjacency(rows, cols), cfg.lambda_sim, cfg.lambda_fr, cfg.sim_target
        ), grads

    for epoch in range(cfg.epochs + 1):
        est = build_normalized_estimate(factor, cfg.epsilon)
        trace = _forward(X, est.a_tilde, model, epoch)
        select.record(epoch, trace.probs, history, lambda: (model.copy(), factor.copy(), est.a_tilde))
        if epoch == cfg.epochs:
            break
        ce = cross_entropy(trace.probs, labels, train_ids, cfg.ce_mode)
        sim = sim_loss(A, est.a_tilde if cfg.sim_target == "normalized" else est.pruned)
        fr = fr_loss(factor)
        for name, value in (("cross-entropy", ce), ("similarity loss", sim), ("Frobenius loss", fr)):
            _check_finite(value, name, epoch)
        history["ce"].append(ce)
        history["sim"].append(sim)
        history["fr"].append(fr)
        history["nnz"].append(est.pruned.nnz)

        if joint:
            d_u, grads = u_step(est, trace, True)
            theta_opt.step(model.params(), {"w1": grads.w1, "w2": grads.w2})
        else:
            grads = gcn_backward(trace, X, est.a_tilde, model, labels, train_ids, cfg.ce_mode)
            theta_opt.step(model.params(), {"w1": grads.w1, "w2": grads.w2})
            d_u, _ = u_step(est, _forward(X, est.a_tilde, model, epoch), False)
        if not np.all(np.isfinite(d_u)):
            raise FloatingPointError(f"non-finite factor gradient at epoch {epoch}")
        u_opt.step({"u": factor.u}, {"u": d_u})

    a_tilde = est.a_tilde
    if select.state is not None:
        model, factor, a_tilde = select.state
    train_s = time.perf_counter() - t0 - pre
    return TrainedModel("elr", cfg, model, a_tilde, factor, history, select.epoch, pre, train_s)


METHODS = {"elr": train, "gcn": gcn_train, "gcn-svd": svd_baseline_train}


def fit(method: str, graph: G.SparseGraph, split: G.NodeSplit, cfg: TrainConfig) -> TrainedModel:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(METHODS)}")
    return METHODS[method](graph, split, cfg)
