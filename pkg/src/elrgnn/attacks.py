"""Poisoning structure attacks: random edge injection and a DICE heuristic."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import graph as G

logger = logging.getLogger(__name__)

KINDS = ("random", "dice")


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise AttackError(f"perturbation rate must be >= 0, got {self.rate}")

    def budget(self, A: sp.csr_array) -> int:
        return int(np.floor(self.rate * G.n_edges(A)))


def _from_pairs(n: int, pairs: np.ndarray) -> sp.csr_array:
    if len(pairs) == 0:
        return G.empty(n)
    return G.from_arrays(
        n,
        np.concatenate([pairs[:, 0], pairs[:, 1]]),
        np.concatenate([pairs[:, 1], pairs[:, 0]]),
        np.ones(2 * len(pairs)),
    )


def _edge_set(A: sp.csr_array) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in G.upper_edges(A)}


def random_attack(A: sp.csr_array, rate: float, seed: int) -> sp.csr_array:
    """Insert ``floor(rate * |E|)`` uniformly chosen absent edges with weight 1."""
    n = A.shape[0]
    existing = _edge_set(A)
    budget = AttackSpec("random", rate, seed).budget(A)
    if budget == 0:
        return A.copy()
    room = n * (n - 1) // 2 - len(existing)
    if budget > room:
        raise AttackError(f"cannot insert {budget} edges: at most {room} pairs are absent")
    rng = np.random.default_rng(seed)
    added: set[tuple[int, int]] = set()
    if budget > room // 2:
        iu, ju = np.triu_indices(n, k=1)
        absent = [(int(i), int(j)) for i, j in zip(iu, ju) if (i, j) not in existing]
        pick = rng.choice(len(absent), size=budget, replace=False)
        added = {absent[k] for k in pick}
    else:
        while len(added) < budget:
            i, j = (int(v) for v in rng.integers(n, size=2))
            if i == j:
                continue
            pair = (min(i, j), max(i, j))
            if pair not in existing:
                added.add(pair)
    return _apply(A, inserted=added)


def _apply(A: sp.csr_array, inserted=(), deleted=()) -> sp.csr_array:
    """``A`` minus the deleted pairs plus unit-weight inserted pairs."""
    n = A.shape[0]
    out = A.copy()
    if deleted:
        pairs = np.array(sorted(deleted), dtype=np.int64)
        w = G.values_at(A, pairs[:, 0], pairs[:, 1])
        out = out - G.from_arrays(
            n,
            np.concatenate([pairs[:, 0], pairs[:, 1]]),
            np.concatenate([pairs[:, 1], pairs[:, 0]]),
            np.concatenate([w, w]),
        )
    if inserted:
        out = out + _from_pairs(n, np.array(sorted(inserted), dtype=np.int64))
    out = sp.csr_array(out)
    out.eliminate_zeros()
    out.sort_indices()
    return out


@dataclass
class DiceLog:
    inserted: int = 0
    deleted: int = 0
    requested: int = 0

    @property
    def spent(self) -> int:
        return self.inserted + self.deleted


def dice_attack(A: sp.csr_array, labels: np.ndarray, rate: float, seed: int, log: DiceLog | None = None) -> sp.csr_array:
    """Delete internal edges and connect external pairs.

    Each unit of budget flips a fair coin between deleting a random
    same-class edge and inserting a random absent cross-class edge. If one
    move is exhausted the other is used; if both are, the attack stops early.
    """
    labels = np.asarray(labels)
    n = A.shape[0]
    if labels.shape != (n,) or np.any(labels == G.UNLABELED):
        raise AttackError("dice needs a label for every node")
    log = log if log is not None else DiceLog()
    budget = AttackSpec("dice", rate, seed).budget(A)
    log.requested = budget
    rng = np.random.default_rng(seed)
    edges = _edge_set(A)
    inserted: set[tuple[int, int]] = set()
    deleted: set[tuple[int, int]] = set()
    intra = sorted(e for e in edges if labels[e[0]] == labels[e[1]])
    counts = np.bincount(labels, minlength=labels.max() + 1 if n else 0)
    inter_pairs = (n * n - int(np.sum(counts * counts))) // 2
    inter_absent = inter_pairs - sum(1 for e in edges if labels[e[0]] != labels[e[1]])

    for _ in range(budget):
        delete = rng.random() < 0.5
        if delete and not intra:
            delete = False
        if not delete and inter_absent == 0:
            if not intra:
                logger.warning("dice stopped after %d of %d perturbations", log.spent, budget)
                break
            delete = True
        if delete:
            k = int(rng.integers(len(intra)))
            intra[k], intra[-1] = intra[-1], intra[k]
            pair = intra.pop()
            edges.discard(pair)
            deleted.add(pair)
            log.deleted += 1
        else:
            while True:
                i, j = (int(v) for v in rng.integers(n, size=2))
                pair = (min(i, j), max(i, j))
                if labels[i] != labels[j] and pair not in edges:
                    break
            edges.add(pair)
            inserted.add(pair)
            inter_absent -= 1
            log.inserted += 1
    return _apply(A, inserted=inserted, deleted=deleted)


def attack(A: sp.csr_array, spec: AttackSpec, labels: np.ndarray | None = None) -> sp.csr_array:
    if spec.kind == "random":
        return random_attack(A, spec.rate, spec.seed)
    if labels is None:
        raise AttackError("dice attack requires labels")
    return dice_attack(A, labels, spec.rate, spec.seed)


def perturbation_report(before: sp.csr_array, after: sp.csr_array) -> dict:
    if before.shape != after.shape:
        raise AttackError(f"shape mismatch {before.shape} vs {after.shape}")
    e0, e1 = _edge_set(before), _edge_set(after)
    added, removed = len(e1 - e0), len(e0 - e1)
    rate = (added + removed) / len(e0) if e0 else 0.0
    return {"added": added, "removed": removed, "rate": rate}
