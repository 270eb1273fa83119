"""Text file formats for graphs, splits, checkpoints and run records.

Every loader rejects malformed input instead of repairing it, and errors
name the file and line. Floats are written with 17 significant digits so
float64 values survive a save/load round trip exactly.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import graph as G
from .estimator import (
    LowRankFactor,
    TrainConfig,
    TrainedModel,
    build_normalized_estimate,
)
from .gnn import GcnModel

FLOAT_FMT = "%.17g"


class DataError(ValueError):
    pass


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line


def _parse_int(token: str, path, lineno) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected an integer, got {token!r}") from None


def _parse_float(token: str, path, lineno) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected a number, got {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{lineno}: non-finite value {token!r}")
    return value


# -- graphs ---------------------------------------------------------------

def load_graph(path, n: int) -> sp.csr_array:
    """Edge list ``src<TAB>dst[<TAB>weight]``; weight defaults to 1."""
    edges = []
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
        i = _parse_int(parts[0], path, lineno)
        j = _parse_int(parts[1], path, lineno)
        w = _parse_float(parts[2], path, lineno) if len(parts) == 3 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise DataError(f"{path}:{lineno}: node id out of range for n={n}")
        edges.append((i, j, w))
    return G.build_symmetric(n, edges)


def save_graph(A: sp.csr_array, path) -> None:
    """Canonical edge list: one line per undirected edge, ``i < j``, sorted."""
    coo = A.tocoo()
    keep = coo.row < coo.col
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    order = np.lexsort((cols, rows))
    with open(path, "w", encoding="utf-8") as fh:
        for k in order:
            if vals[k] == 1.0:
                fh.write(f"{rows[k]}\t{cols[k]}\n")
            else:
                fh.write(f"{rows[k]}\t{cols[k]}\t{_fmt(vals[k])}\n")


def load_features(path, n: int) -> np.ndarray:
    rows = []
    for lineno, line in _lines(path):
        rows.append([_parse_float(tok, path, lineno) for tok in line.split(",")])
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if len(rows) != n:
        raise DataError(f"{path}: expected {n} feature rows, got {len(rows)}")
    return np.array(rows, dtype=np.float64).reshape(n, -1)


def save_matrix(M: np.ndarray, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        for row in M:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    rows = []
    for lineno, line in _lines(path):
        rows.append([_parse_float(tok, path, lineno) for tok in line.split(",")])
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}:{lineno}: ragged row")
    return np.array(rows, dtype=np.float64)


def load_labels(path, n: int) -> np.ndarray:
    """``node<TAB>label`` lines; nodes that never appear stay unlabeled."""
    labels = np.full(n, G.UNLABELED, dtype=np.int64)
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected node<TAB>label")
        node = _parse_int(parts[0], path, lineno)
        label = _parse_int(parts[1], path, lineno)
        if not 0 <= node < n:
            raise DataError(f"{path}:{lineno}: node id {node} out of range for n={n}")
        if label < 0:
            raise DataError(f"{path}:{lineno}: negative label")
        if labels[node] != G.UNLABELED:
            raise DataError(f"{path}:{lineno}: node {node} labeled twice")
        labels[node] = label
    return labels


def save_labels(labels: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, label in enumerate(labels):
            if label != G.UNLABELED:
                fh.write(f"{node}\t{label}\n")


def load_split(path) -> G.NodeSplit:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict) or "train" not in raw:
        raise DataError(f"{path}: split must be an object with train/val/test lists")
    for key in ("train", "val", "test"):
        ids = raw.get(key, [])
        if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ids):
            raise DataError(f"{path}: {key!r} must be a list of integers")
    try:
        return G.NodeSplit(raw["train"], raw.get("val", []), raw.get("test", []))
    except G.GraphError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_split(split: G.NodeSplit, path) -> None:
    data = {k: [int(i) for i in split.part(k)] for k in ("train", "val", "test")}
    Path(path).write_text(json.dumps(data) + "\n", encoding="utf-8")


# -- datasets -------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    path: Path
    name: str
    n_nodes: int
    n_features: int  # 0 means identity features
    n_classes: int
    files: dict
    checksums: dict

    def file(self, key: str) -> Optional[Path]:
        rel = self.files.get(key)
        return None if rel is None else self.path.parent / rel


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from None
    missing = [k for k in ("name", "n_nodes", "n_features", "n_classes", "files") if k not in raw]
    if missing:
        raise DataError(f"{path}: manifest lacks {', '.join(missing)}")
    m = DatasetManifest(
        path, raw["name"], int(raw["n_nodes"]), int(raw["n_features"]), int(raw["n_classes"]),
        dict(raw["files"]), dict(raw.get("checksums", {})),
    )
    for key in ("edges", "labels", "split"):
        if m.files.get(key) is None:
            raise DataError(f"{path}: manifest has no {key!r} file")
    for key in m.files:
        f = m.file(key)
        if f is None:
            continue
        if not f.exists():
            raise DataError(f"{path}: referenced {key} file {f} does not exist")
        expected = m.checksums.get(key)
        if expected is not None and sha256(f) != expected:
            raise DataError(f"{f}: checksum mismatch")
    return m


def load_dataset(manifest_path) -> tuple[G.SparseGraph, G.NodeSplit, DatasetManifest]:
    m = read_manifest(manifest_path)
    A = load_graph(m.file("edges"), m.n_nodes)
    labels = load_labels(m.file("labels"), m.n_nodes)
    if np.any(labels >= m.n_classes):
        raise DataError(f"{m.file('labels')}: label >= n_classes={m.n_classes}")
    X = None
    if m.n_features > 0:
        if m.file("features") is None:
            raise DataError(f"{manifest_path}: n_features > 0 but no features file")
        X = load_features(m.file("features"), m.n_nodes)
        if X.shape[1] != m.n_features:
            raise DataError(f"{m.file('features')}: {X.shape[1]} columns, manifest says {m.n_features}")
    split = load_split(m.file("split"))
    try:
        split.check_nodes(m.n_nodes)
    except G.GraphError as exc:
        raise DataError(f"{m.file('split')}: {exc}") from None
    return G.SparseGraph(A, labels, m.n_classes, X), split, m


def save_dataset(graph: G.SparseGraph, split: G.NodeSplit, directory, name: str,
                 edges_file: str = "edges.tsv") -> Path:
    """Write a dataset directory and return the path of its manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"edges": edges_file, "labels": "labels.tsv", "split": "split.json", "features": None}
    save_graph(graph.adjacency, d / files["edges"])
    save_labels(graph.labels, d / files["labels"])
    save_split(split, d / files["split"])
    if graph.features is not None:
        files["features"] = "features.csv"
        save_matrix(graph.features, d / files["features"])
    return write_manifest(d / "manifest.json", name, graph.n_nodes,
                          0 if graph.features is None else graph.features.shape[1],
                          graph.n_classes, files)


def write_manifest(path, name, n_nodes, n_features, n_classes, files: dict) -> Path:
    path = Path(path)
    checksums = {k: sha256(path.parent / v) for k, v in files.items() if v is not None}
    body = {
        "name": name, "n_nodes": n_nodes, "n_features": n_features, "n_classes": n_classes,
        "files": files, "checksums": checksums,
    }
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- checkpoints ----------------------------------------------------------

@dataclass
class Checkpoint:
    meta: dict
    w1: np.ndarray
    w2: np.ndarray
    u: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None

    @property
    def config(self) -> TrainConfig:
        return TrainConfig(**self.meta["config"])

    def trained_model(self, graph: G.SparseGraph) -> TrainedModel:
        """Rebuild the evaluable model; the GCN baseline needs the training graph."""
        meta = self.meta
        for key, have in (("n_nodes", graph.n_nodes), ("n_features", graph.n_features),
                          ("n_classes", graph.n_classes)):
            if meta[key] != have:
                raise DataError(f"checkpoint {key}={meta[key]} but dataset has {have}")
        cfg = self.config
        model = GcnModel(self.w1, self.w2)
        factor = None
        method = meta["method"]
        if method == "gcn":
            a_tilde = G.sym_normalize(graph.adjacency, add_self_loops=True)
        else:
            factor = LowRankFactor(self.u, self.s)
            eps = cfg.epsilon if method == "elr" else 0.0
            a_tilde = build_normalized_estimate(factor, eps).a_tilde
        return TrainedModel(method, cfg, model, a_tilde, factor, best_epoch=meta.get("epoch", -1))


def save_checkpoint(trained: TrainedModel, graph: G.SparseGraph, path, extra: Optional[dict] = None) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    mats = {"w1": trained.model.w1, "w2": trained.model.w2}
    if trained.factor is not None:
        mats["u"] = trained.factor.u
        mats["s"] = trained.factor.s[None, :]
    files = {}
    for key, M in mats.items():
        files[key] = f"{key}.csv"
        save_matrix(M, d / files[key])
    meta = {
        "format": 1,
        "method": trained.method,
        "config": dataclasses.asdict(trained.config),
        "seed": trained.config.seed,
        "epoch": trained.best_epoch,
        "n_nodes": graph.n_nodes,
        "n_features": graph.n_features,
        "n_classes": graph.n_classes,
        "files": files,
        "checksums": {k: sha256(d / v) for k, v in files.items()},
    }
    if extra:
        meta.update(extra)
    (d / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def load_checkpoint(path) -> Checkpoint:
    d = Path(path)
    try:
        meta = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{d}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{d / 'manifest.json'}:{exc.lineno}: {exc.msg}") from None
    mats = {}
    for key, rel in meta["files"].items():
        f = d / rel
        if not f.exists():
            raise DataError(f"{f}: missing checkpoint file")
        if sha256(f) != meta["checksums"].get(key):
            raise DataError(f"{f}: checksum mismatch")
        mats[key] = load_matrix(f)
    s = mats.get("s")
    return Checkpoint(meta, mats["w1"], mats["w2"], mats.get("u"), None if s is None else s[0])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
