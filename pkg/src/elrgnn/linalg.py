"""Randomized truncated SVD for sparse symmetric matrices and dense kernels.

``truncated_svd`` follows the range-finder recipe of Halko, Martinsson and
Tropp: a Gaussian sketch, a few rounds of subspace iteration, and a small
dense eigen-solve of the projected matrix. ``full_svd_oracle`` is an
independent cyclic Jacobi eigensolver used only to check it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SvdConfig:
    d: int
    oversample: int = 10
    power_iters: int = 8
    seed: int = 0

    def check(self, n: int) -> None:
        if self.d < 1:
            raise ValueError(f"rank d must be >= 1, got {self.d}")
        if self.oversample < 0 or self.power_iters < 0:
            raise ValueError("oversample and power_iters must be non-negative")
        if self.d + self.oversample > n:
            raise ValueError(
                f"d + oversample = {self.d + self.oversample} exceeds matrix size {n}"
            )


@dataclass(frozen=True)
class TruncatedSvdResult:
    """Top-d singular triplets of a symmetric matrix.

    For symmetric ``A`` the right singular vectors equal the left ones up to
    sign: ``A ~= U diag(values * signs) U^T``.
    """

    values: np.ndarray  # non-increasing, >= 0
    vectors: np.ndarray  # (n, d), orthonormal columns
    signs: np.ndarray  # sign of the underlying eigenvalue, +1 or -1

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * (self.values * self.signs)) @ self.vectors.T


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    flip = np.sign(V[idx, np.arange(V.shape[1])])
    flip[flip == 0] = 1.0
    return V * flip


def _orth(Y: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(Y)
    return Q


def truncated_svd(A, cfg: SvdConfig) -> TruncatedSvdResult:
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {A.shape}")
    cfg.check(n)
    data = A.data if sp.issparse(A) else np.asarray(A)
    if not np.all(np.isfinite(data)):
        raise ValueError("matrix has non-finite entries")

    rng = np.random.default_rng(cfg.seed)
    k = cfg.d + cfg.oversample
    Q = _orth(A @ rng.standard_normal((n, k)))
    for _ in range(cfg.power_iters):
        Q = _orth(A @ Q)
        Q = _orth(A @ Q)
    AQ = A @ Q
    B = Q.T @ AQ
    B = 0.5 * (B + B.T)
    evals, W = np.linalg.eigh(B)
    order = np.argsort(-np.abs(evals), kind="stable")[: cfg.d]
    U = _fix_signs(Q @ W[:, order])
    lam = evals[order]
    signs = np.where(lam < 0, -1.0, 1.0)
    return TruncatedSvdResult(values=np.abs(lam), vectors=U, signs=signs)


@dataclass(frozen=True)
class EigenOracle:
    values: np.ndarray  # |eigenvalues|, non-increasing
    vectors: np.ndarray  # columns matched to ``values``
    eigenvalues: np.ndarray  # signed, same order


def _round_robin(m: int):
    """Pairings of 0..m-1 (m even) where every pair meets once per sweep."""
    players = list(range(m))
    for _ in range(m - 1):
        yield [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        players = [players[0], players[-1]] + players[1:-1]


def full_svd_oracle(A, tol: float = 1e-12, max_sweeps: int = 100) -> EigenOracle:
    """Dense symmetric eigendecomposition by cyclic Jacobi rotations.

    Rotations on disjoint index pairs commute, so each round-robin round is
    applied as one batch.
    """
    A = np.array(A.toarray() if sp.issparse(A) else A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("oracle needs a square matrix")
    if n > 256:
        raise ValueError(f"oracle limited to n <= 256, got {n}")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10:
        raise ValueError("oracle input is not symmetric")
    A = 0.5 * (A + A.T)
    m = n + (n % 2)
    if m != n:
        A = np.pad(A, ((0, 1), (0, 1)))
    V = np.eye(m)
    scale = max(np.linalg.norm(A), 1.0)
    rounds = [np.array(r).T for r in _round_robin(m)]
    off_mask = ~np.eye(m, dtype=bool)

    for _ in range(max_sweeps):
        if np.sqrt(np.sum(A[off_mask] ** 2)) <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            theta = np.where(active, (A[q, q] - A[p, p]) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            big = np.abs(theta) > 1e150
            th = np.where(big, 1.0, theta)
            t = np.sign(th + (th == 0)) / (np.abs(th) + np.sqrt(th * th + 1.0))
            # tan of the rotation angle tends to 1/(2 theta) when a_pq is negligible
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
    else:
        raise RuntimeError("Jacobi sweeps did not converge")

    evals = np.diag(A)[:n]
    V = V[:n, :n]
    order = np.argsort(-np.abs(evals), kind="stable")
    return EigenOracle(values=np.abs(evals[order]), vectors=V[:, order], eigenvalues=evals[order])


def spmm(A, B: np.ndarray) -> np.ndarray:
    """Sparse (CSR, or a CSC transpose view) times dense."""
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"cannot multiply {A.shape} by {B.shape}")
    return np.asarray(A @ B)


def frobenius_sq(M) -> float:
    if sp.issparse(M):
        d = M.data
        return float(np.dot(d, d))
    M = np.asarray(M, dtype=np.float64)
    return float(np.sum(M * M))
