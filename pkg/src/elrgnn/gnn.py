"""Two-layer GCN with manual reverse-mode gradients, and its optimizers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .linalg import spmm

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-15


@dataclass
class GcnModel:
    w1: np.ndarray  # (D, H)
    w2: np.ndarray  # (H, C)

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def glorot(cls, n_features: int, hidden: int, n_classes: int, rng: np.random.Generator):
        def uniform(fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        return cls(uniform(n_features, hidden), uniform(hidden, n_classes))

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "w2": self.w2}

    def copy(self) -> "GcnModel":
        return GcnModel(self.w1.copy(), self.w2.copy())


@dataclass
class ForwardTrace:
    xw1: np.ndarray  # X W1
    z1: np.ndarray  # A X W1
    h: np.ndarray  # relu(z1)
    hw2: np.ndarray  # H W2
    z2: np.ndarray  # A H W2, the logits
    probs: np.ndarray


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def gcn_forward(X: np.ndarray, a_norm: sp.csr_array, model: GcnModel) -> ForwardTrace:
    """``P = softmax(A relu(A X W1) W2)``."""
    if X.shape[1] != model.w1.shape[0]:
        raise ValueError(f"features have {X.shape[1]} columns, W1 expects {model.w1.shape[0]}")
    if a_norm.shape != (X.shape[0], X.shape[0]):
        raise ValueError(f"adjacency {a_norm.shape} does not match {X.shape[0]} nodes")
    xw1 = X @ model.w1
    z1 = spmm(a_norm, xw1)
    if not np.all(np.isfinite(z1)):
        raise FloatingPointError("non-finite activation in layer 1")
    h = np.maximum(z1, 0.0)
    hw2 = h @ model.w2
    z2 = spmm(a_norm, hw2)
    if not np.all(np.isfinite(z2)):
        raise FloatingPointError("non-finite activation in layer 2")
    return ForwardTrace(xw1, z1, h, hw2, z2, softmax(z2))


def cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray, mode: str = "mean") -> float:
    """Negative log-likelihood of the true labels over ``mask``."""
    mask = np.asarray(mask)
    if len(mask) == 0:
        raise ValueError("empty loss mask")
    picked = probs[mask, labels[mask]]
    if np.any(picked <= PROB_FLOOR):
        logger.debug("clamped %d probabilities at %g", int(np.sum(picked <= PROB_FLOOR)), PROB_FLOOR)
    total = -np.sum(np.log(np.maximum(picked, PROB_FLOOR)))
    if mode == "mean":
        return float(total / len(mask))
    if mode == "sum":
        return float(total)
    raise ValueError(f"unknown cross-entropy mode {mode!r}")


@dataclass
class Gradients:
    w1: Optional[np.ndarray]
    w2: Optional[np.ndarray]
    dz1: np.ndarray
    dz2: np.ndarray
    trace: ForwardTrace = field(repr=False)

    def adjacency(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """dL/dA[i, j] for each requested entry of the normalized adjacency.

        A enters both layers, so each entry collects
        ``dZ2[i] . (H W2)[j] + dZ1[i] . (X W1)[j]``.
        """
        t = self.trace
        left = np.hstack([self.dz2, self.dz1])
        right = np.hstack([t.hw2, t.xw1])
        return np.einsum("ij,ij->i", left[rows], right[cols])


def gcn_backward(
    trace: ForwardTrace,
    X: np.ndarray,
    a_norm: sp.csr_array,
    model: GcnModel,
    labels: np.ndarray,
    mask: np.ndarray,
    mode: str = "mean",
    need_weights: bool = True,
) -> Gradients:
    """Exact gradients of ``cross_entropy`` through ``gcn_forward``.

    With ``need_weights=False`` only the adjacency gradient is prepared and
    the weight gradients are returned as None.
    """
    n, c = trace.probs.shape
    if trace.xw1.shape != (X.shape[0], model.hidden) or c != model.w2.shape[1]:
        raise ValueError("trace does not match the model/input shapes")
    mask = np.asarray(mask)
    dz2 = np.zeros((n, c))
    dz2[mask] = trace.probs[mask]
    dz2[mask, labels[mask]] -= 1.0
    if mode == "mean":
        dz2 /= len(mask)
    at = a_norm.T  # CSC view, no copy
    d_hw2 = spmm(at, dz2)
    dz1 = (d_hw2 @ model.w2.T) * (trace.z1 > 0)
    if not need_weights:
        return Gradients(None, None, dz1, dz2, trace)
    gw2 = trace.h.T @ d_hw2
    gw1 = X.T @ spmm(at, dz1)
    return Gradients(gw1, gw2, dz1, dz2, trace)


class Adam:
    """Adam with classic L2 weight decay folded into the gradient."""

    def __init__(self, lr=1e-2, weight_decay=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * p
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


class SgdMomentum:
    def __init__(self, lr=1e-2, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            v = self.velocity.get(k)
            v = grads[k].copy() if v is None else self.momentum * v + grads[k]
            self.velocity[k] = v
            p -= self.lr * v


def accuracy(probs: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> float:
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("accuracy over an empty node set")
    return float(np.mean(np.argmax(probs[ids], axis=1) == labels[ids]))
