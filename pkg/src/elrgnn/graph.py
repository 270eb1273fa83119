"""Sparse symmetric adjacency storage, degrees and symmetric normalization.

Adjacency matrices are ``scipy.sparse.csr_array`` instances in canonical
form (sorted column indices, no duplicates, no stored zeros). Dense matrices
are plain float64 ``numpy`` arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

UNLABELED = -1
DEGREE_FLOOR = 1e-12


class GraphError(ValueError):
    """Raised when a graph, edge list or split violates its contract."""


def empty(n: int) -> sp.csr_array:
    return sp.csr_array((n, n), dtype=np.float64)


def from_arrays(n: int, rows, cols, vals) -> sp.csr_array:
    """Build a canonical CSR matrix from coordinate arrays with no duplicates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    keep = vals != 0.0
    A = sp.csr_array((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    A.sort_indices()
    return A


def build_symmetric(n: int, edges: Iterable[tuple]) -> sp.csr_array:
    """Symmetric CSR adjacency from an undirected edge list.

    Each edge is ``(i, j)`` or ``(i, j, w)``; a missing weight means 1.0.
    Repeated pairs (in either orientation) keep the weight seen last, and
    self-loops are dropped.
    """
    latest: dict[tuple[int, int], float] = {}
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        w = float(edge[2]) if len(edge) > 2 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge {tuple(edge)} out of range for n={n}")
        if not np.isfinite(w):
            raise GraphError(f"edge {tuple(edge)} has non-finite weight")
        if i == j:
            continue
        latest[(min(i, j), max(i, j))] = w
    if not latest:
        return empty(n)
    pairs = np.array(list(latest.keys()), dtype=np.int64)
    w = np.array(list(latest.values()), dtype=np.float64)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return from_arrays(n, rows, cols, np.concatenate([w, w]))


def check_csr(A: sp.csr_array) -> None:
    """Raise GraphError unless ``A`` satisfies the canonical CSR invariants."""
    n_rows, n_cols = A.shape
    indptr, indices, data = A.indptr, A.indices, A.data
    if len(indptr) != n_rows + 1 or indptr[0] != 0:
        raise GraphError("row_offsets must have length n_rows + 1 and start at 0")
    if np.any(np.diff(indptr) < 0):
        raise GraphError("row_offsets must be non-decreasing")
    if indptr[-1] != len(data) or len(indices) != len(data):
        raise GraphError("last row offset must equal the number of stored values")
    if len(indices) and (indices.min() < 0 or indices.max() >= n_cols):
        raise GraphError("column index out of range")
    steps = np.diff(indices)
    row_starts = np.zeros(len(indices), dtype=bool)
    row_starts[indptr[:-1][np.diff(indptr) > 0]] = True
    if np.any(steps[~row_starts[1:]] <= 0):
        raise GraphError("column indices must be strictly increasing within a row")
    if np.any(data == 0.0):
        raise GraphError("explicitly stored zero")
    if not np.all(np.isfinite(data)):
        raise GraphError("non-finite stored value")


def is_symmetric(A: sp.csr_array) -> bool:
    """Exact (bitwise) structural and value symmetry."""
    if A.shape[0] != A.shape[1]:
        return False
    T = A.T.tocsr()
    T.sort_indices()
    return (
        np.array_equal(A.indptr, T.indptr)
        and np.array_equal(A.indices, T.indices)
        and np.array_equal(A.data, T.data)
    )


def upper_edges(A: sp.csr_array) -> np.ndarray:
    """Undirected off-diagonal edges as an (m, 2) array with i < j, sorted."""
    coo = A.tocoo()
    keep = coo.row < coo.col
    pairs = np.stack([coo.row[keep], coo.col[keep]], axis=1).astype(np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def n_edges(A: sp.csr_array) -> int:
    return len(upper_edges(A))


def values_at(A: sp.csr_array, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Entries ``A[rows[k], cols[k]]`` (zero where nothing is stored)."""
    n = A.shape[1]
    A_rows = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(A.indptr))
    keys = A_rows * n + A.indices  # sorted for canonical CSR
    query = np.asarray(rows, dtype=np.int64) * n + np.asarray(cols, dtype=np.int64)
    pos = np.searchsorted(keys, query)
    pos = np.minimum(pos, max(len(keys) - 1, 0))
    out = np.zeros(len(query))
    if len(keys):
        hit = keys[pos] == query
        out[hit] = A.data[pos[hit]]
    return out


def degree_vector(A: sp.csr_array) -> np.ndarray:
    if A.shape[0] != A.shape[1]:
        raise GraphError(f"degree of a non-square {A.shape} matrix")
    # csr matvec accumulates each row in ascending column order
    return A @ np.ones(A.shape[1])


def sym_normalize(
    A: sp.csr_array,
    add_self_loops: bool = False,
    stats: Optional[dict] = None,
) -> sp.csr_array:
    """Return ``D^-1/2 A D^-1/2`` (of ``A + I`` when ``add_self_loops``).

    Rows whose degree is below ``DEGREE_FLOOR`` come out as all-zero rows.
    A negative degree is treated the same way and counted under
    ``stats["negative_degree"]`` when a dict is supplied.
    """
    if add_self_loops:
        A = (A + sp.eye_array(A.shape[0], format="csr")).tocsr()
        A.sort_indices()
    deg = degree_vector(A)
    negative = deg < 0
    if negative.any():
        logger.warning("%d rows with negative degree zeroed", int(negative.sum()))
        if stats is not None:
            stats["negative_degree"] = stats.get("negative_degree", 0) + int(negative.sum())
    scale = _inv_sqrt(deg)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    # scale[i] * scale[j] commutes bitwise, which keeps the output exactly symmetric
    data = A.data * (scale[rows] * scale[A.indices])
    out = sp.csr_array((data, A.indices.copy(), A.indptr.copy()), shape=A.shape)
    out.eliminate_zeros()
    return out


def inv_sqrt_degree(A: sp.csr_array) -> np.ndarray:
    """Per-node scale factors used by ``sym_normalize`` (zero for floored rows)."""
    return _inv_sqrt(degree_vector(A))


def _inv_sqrt(deg: np.ndarray) -> np.ndarray:
    scale = np.zeros_like(deg)
    ok = deg >= DEGREE_FLOOR
    scale[ok] = 1.0 / np.sqrt(deg[ok])
    return scale


@dataclass(frozen=True)
class SparseGraph:
    """Attacked or clean input graph.

    ``features`` is None for featureless graphs; ``feature_matrix`` then
    returns the identity (one-hot node ids).
    """

    adjacency: sp.csr_array
    labels: np.ndarray
    n_classes: int
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise GraphError("adjacency must be square")
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.shape != (n,):
            raise GraphError(f"expected {n} labels, got {labels.shape}")
        bad = (labels != UNLABELED) & ((labels < 0) | (labels >= self.n_classes))
        if bad.any():
            raise GraphError(f"label out of range at node {int(np.flatnonzero(bad)[0])}")
        if self.features is not None:
            X = np.asarray(self.features, dtype=np.float64)
            if X.ndim != 2 or X.shape[0] != n:
                raise GraphError(f"features must have {n} rows")
            if not np.all(np.isfinite(X)):
                raise GraphError("non-finite feature value")
            object.__setattr__(self, "features", X)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.n_nodes if self.features is None else self.features.shape[1]

    def feature_matrix(self) -> np.ndarray:
        if self.features is None:
            return np.eye(self.n_nodes)
        return self.features

    def with_adjacency(self, A: sp.csr_array) -> "SparseGraph":
        return SparseGraph(A, self.labels, self.n_classes, self.features)


@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if len(self.train) == 0:
            raise GraphError("train split is empty")
        parts = [self.train, self.val, self.test]
        for ids in parts:
            if len(np.unique(ids)) != len(ids):
                raise GraphError("duplicate node id inside a split part")
        if len(np.unique(np.concatenate(parts))) != sum(len(p) for p in parts):
            raise GraphError("split parts overlap")
        if min(p.min() for p in parts if len(p)) < 0:
            raise GraphError("negative node id in split")

    def part(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise GraphError(f"unknown split part {name!r}")
        return getattr(self, name)

    def check_nodes(self, n: int) -> None:
        top = max(int(p.max()) for p in (self.train, self.val, self.test) if len(p))
        if top >= n:
            raise GraphError(f"split references node {top} but graph has {n} nodes")


def random_split(
    labels: np.ndarray, seed: int, train_frac: float = 0.1, val_frac: float = 0.1
) -> NodeSplit:
    """Random 10/10/80 style split over labeled nodes."""
    labeled = np.flatnonzero(np.asarray(labels) != UNLABELED)
    perm = np.random.default_rng(seed).permutation(labeled)
    n_train = max(1, int(round(train_frac * len(labeled))))
    n_val = int(round(val_frac * len(labeled)))
    return NodeSplit(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
    )
