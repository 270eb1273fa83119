"""Planted-partition graphs used as controllable desk-scale testbeds."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import graph as G


def sbm(sizes: Sequence[int], p_in: float, p_out: float, seed: int):
    """Undirected stochastic block model; returns ``(adjacency, labels)``."""
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    prob = np.where(labels[rows] == labels[cols], p_in, p_out)
    hit = rng.random(len(rows)) < prob
    r, c = rows[hit], cols[hit]
    A = G.from_arrays(n, np.concatenate([r, c]), np.concatenate([c, r]), np.ones(2 * len(r)))
    return A, labels


def sbm_graph(
    n: int = 200,
    n_blocks: int = 2,
    p_in: float = 0.1,
    p_out: float = 0.01,
    seed: int = 0,
    features: Optional[str] = None,
) -> G.SparseGraph:
    """Equal-size SBM graph.

    ``features=None`` leaves the graph featureless (identity features);
    ``"noisy"`` adds weak class-correlated Gaussian features.
    """
    sizes = [n // n_blocks + (1 if b < n % n_blocks else 0) for b in range(n_blocks)]
    A, labels = sbm(sizes, p_in, p_out, seed)
    X = None
    if features == "noisy":
        rng = np.random.default_rng([seed, 7])
        centers = rng.normal(size=(n_blocks, 16))
        X = 0.3 * centers[labels] + rng.normal(size=(n, 16))
    elif features is not None:
        raise ValueError(f"unknown feature mode {features!r}")
    return G.SparseGraph(A, labels, n_blocks, X)


def citation_like(
    n: int = 2708,
    n_classes: int = 7,
    n_features: int = 1433,
    n_edges: int = 5429,
    homophily: float = 0.8,
    words_per_node: int = 18,
    seed: int = 0,
) -> G.SparseGraph:
    """Synthetic graph with the size profile of a small citation network.

    Binary bag-of-words features are drawn from class-specific vocabularies
    and edges are planted with the requested fraction inside classes.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    n_in = int(round(homophily * n_edges))
    seen: set[tuple[int, int]] = set()
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    while len(seen) < n_edges:
        i = int(rng.integers(n))
        if len(seen) < n_in:
            pool = by_class[labels[i]]
            j = int(pool[rng.integers(len(pool))])
        else:
            j = int(rng.integers(n))
            if labels[i] == labels[j]:
                continue
        if i != j:
            seen.add((min(i, j), max(i, j)))
    pairs = np.array(sorted(seen))
    A = G.from_arrays(
        n,
        np.concatenate([pairs[:, 0], pairs[:, 1]]),
        np.concatenate([pairs[:, 1], pairs[:, 0]]),
        np.ones(2 * len(pairs)),
    )
    vocab = rng.dirichlet(np.full(n_features, 0.05), size=n_classes)
    background = np.full(n_features, 1.0 / n_features)
    X = np.zeros((n, n_features))
    for i in range(n):
        p = 0.7 * vocab[labels[i]] + 0.3 * background
        X[i, rng.choice(n_features, size=words_per_node, replace=False, p=p)] = 1.0
    return G.SparseGraph(A, labels, n_classes, X)
