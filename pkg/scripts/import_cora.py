#!/usr/bin/env python3
"""Convert a citation dataset into the text layout read by ``elrgnn``.

Two inputs are accepted:

* the LINQS release: ``cora.content`` (id, binary words, class name) and
  ``cora.cites`` (cited id, citing id);
* a compressed ``.npz`` in the layout used by the common robustness
  benchmarks (``adj_data``/``adj_indices``/``adj_indptr``/``adj_shape``,
  ``attr_*`` and ``labels``).

By default only the largest connected component is kept, which is the
convention of the robustness benchmarks (2485 nodes for Cora). The split is
a random 10/10/80 split drawn with ``--seed``.

    python3 scripts/import_cora.py --content cora.content --cites cora.cites --out data/cora
    python3 scripts/import_cora.py --npz cora.npz --out data/cora
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from elrgnn import dataio as io
from elrgnn import graph as G


def read_linqs(content: Path, cites: Path):
    ids, rows, names = [], [], []
    with open(content, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) < 3:
                raise io.DataError(f"{content}:{lineno}: too few fields")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            names.append(parts[-1])
    index = {pid: k for k, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names])
    edges, skipped = [], 0
    with open(cites, encoding="utf-8") as fh:
        for line in fh:
            a, b = line.split()
            if a in index and b in index:
                edges.append((index[a], index[b]))
            else:
                skipped += 1
    if skipped:
        print(f"skipped {skipped} citations to unknown papers", file=sys.stderr)
    A = G.build_symmetric(len(ids), edges)
    return A, np.array(rows), labels, len(classes)


def read_npz(path: Path):
    z = np.load(path, allow_pickle=False)
    A = sp.csr_array((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"]))
    X = sp.csr_array((z["attr_data"], z["attr_indices"], z["attr_indptr"]), shape=tuple(z["attr_shape"])).toarray()
    A = sp.csr_array(((A + A.T) > 0).astype(np.float64))
    A.setdiag(0)
    A.eliminate_zeros()
    A.sort_indices()
    labels = np.asarray(z["labels"])
    return A, X, labels, int(labels.max()) + 1


def largest_component(A, X, labels):
    _, comp = connected_components(A, directed=False)
    keep = np.flatnonzero(comp == np.argmax(np.bincount(comp)))
    A = sp.csr_array(A[keep][:, keep])
    A.sort_indices()
    return A, X[keep], labels[keep]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--content")
    p.add_argument("--cites")
    p.add_argument("--npz")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="cora")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full-graph", action="store_true", help="keep every component")
    args = p.parse_args(argv)
    if args.npz:
        A, X, labels, n_classes = read_npz(Path(args.npz))
    elif args.content and args.cites:
        A, X, labels, n_classes = read_linqs(Path(args.content), Path(args.cites))
    else:
        p.error("give --npz or both --content and --cites")
    if not args.full_graph:
        A, X, labels = largest_component(A, X, labels)
    graph = G.SparseGraph(A, labels, n_classes, X)
    manifest = io.save_dataset(graph, G.random_split(labels, args.seed), args.out, args.name)
    print(f"{graph.n_nodes} nodes, {G.n_edges(A)} edges, {X.shape[1]} features, {n_classes} classes -> {manifest}")


if __name__ == "__main__":
    main()
