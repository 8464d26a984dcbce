"""Gram matrices under the four kernel families used for KCCA."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSet, DimensionMismatch, NegativeInput

CHI2_EPS = 1e-10


class KernelKind(str, enum.Enum):
    Linear = "Linear"
    Rbf = "Rbf"
    Chi2 = "Chi2"
    ExpChi2 = "ExpChi2"

    def __str__(self) -> str:
        return self.value

    @property
    def needs_gamma(self) -> bool:
        return self in (KernelKind.Rbf, KernelKind.ExpChi2)

    @property
    def needs_nonnegative(self) -> bool:
        return self in (KernelKind.Chi2, KernelKind.ExpChi2)


ALL_KERNELS = (KernelKind.Linear, KernelKind.Rbf, KernelKind.Chi2, KernelKind.ExpChi2)


@dataclass(frozen=True)
class KernelParams:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    kind: KernelKind
    row_set_id: str = ""
    col_set_id: str = ""


def sq_euclidean(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    xx = np.einsum("ij,ij->i", X, X)[:, None]
    yy = np.einsum("ij,ij->i", Y, Y)[None, :]
    return np.maximum(xx + yy - 2 * X @ Y.T, 0.0)


def _block_rows(Y: np.ndarray, budget: int = 4_000_000) -> int:
    return max(1, budget // max(1, Y.shape[0] * Y.shape[1]))


def chi2_distance(X: np.ndarray, Y: np.ndarray, eps: float = CHI2_EPS) -> np.ndarray:
    """sum_k (x_k - y_k)^2 / (0.5 (x_k + y_k) + eps) for every row pair."""
    out = np.empty((X.shape[0], Y.shape[0]))
    block_rows = _block_rows(Y)
    for s in range(0, X.shape[0], block_rows):
        xb = X[s:s + block_rows, None, :]
        diff = xb - Y[None, :, :]
        out[s:s + block_rows] = np.einsum("ijk,ijk->ij", diff, diff / (0.5 * (xb + Y[None]) + eps))
    return out


def additive_chi2(X: np.ndarray, Y: np.ndarray, eps: float = CHI2_EPS) -> np.ndarray:
    """sum_k 2 x_k y_k / (x_k + y_k + eps), the positive definite chi-squared kernel."""
    out = np.empty((X.shape[0], Y.shape[0]))
    block_rows = _block_rows(Y)
    for s in range(0, X.shape[0], block_rows):
        xb = X[s:s + block_rows, None, :]
        out[s:s + block_rows] = (2 * xb * Y[None] / (xb + Y[None] + eps)).sum(axis=2)
    return out


def _chi2_similarity(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # cosine-normalised additive chi2: unit self-similarity and PSD;
    # a zero vector is similar only to other zero vectors
    k = additive_chi2(X, Y)
    nx = X.sum(axis=1)
    ny = Y.sum(axis=1)
    denom = np.sqrt(np.outer(nx, ny))
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(denom > 0, k / np.where(denom > 0, denom, 1.0), 0.0)
    zero_pair = np.outer(nx == 0, ny == 0)
    k[zero_pair] = 1.0
    return k


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def gram(X, Y, kind: KernelKind, params: KernelParams = KernelParams(),
         row_set_id: str = "", col_set_id: str = "") -> KernelMatrix:
    """Kernel matrix between the rows of ``X`` (n, d) and ``Y`` (m, d)."""
    kind = KernelKind(kind)
    X, Y = _as_matrix(X), _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"descriptor dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if kind.needs_nonnegative and (np.any(X < 0) or np.any(Y < 0)):
        raise NegativeInput(f"{kind} kernel requires nonnegative descriptors")
    if kind is KernelKind.Linear:
        K = X @ Y.T
    elif kind is KernelKind.Rbf:
        K = np.exp(-params.gamma * sq_euclidean(X, Y))
    elif kind is KernelKind.Chi2:
        K = _chi2_similarity(X, Y)
    else:
        K = np.exp(-params.gamma * chi2_distance(X, Y))
    if X is Y or (X.shape == Y.shape and np.array_equal(X, Y)):
        K = 0.5 * (K + K.T)
        if kind is not KernelKind.Linear:
            np.fill_diagonal(K, 1.0)
    return KernelMatrix(K, kind, row_set_id, col_set_id)


def bandwidth_heuristic(X, kind: KernelKind, max_pairs: int = 1000, seed: int = 0) -> KernelParams:
    """gamma = 1 / median pairwise base distance over a sample of pairs."""
    kind = KernelKind(kind)
    if not kind.needs_gamma:
        raise ValueError(f"{kind} kernel has no bandwidth")
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise DegenerateSet("need at least two points for the bandwidth heuristic")
    iu, ju = np.triu_indices(n, k=1)
    if iu.size > max_pairs:
        pick = np.sort(np.random.default_rng(seed).choice(iu.size, size=max_pairs, replace=False))
        iu, ju = iu[pick], ju[pick]
    a, b = X[iu], X[ju]
    if kind is KernelKind.Rbf:
        dist = np.einsum("ij,ij->i", a - b, a - b)
    else:
        if np.any(X < 0):
            raise NegativeInput("chi-squared bandwidth requires nonnegative descriptors")
        dist = ((a - b) ** 2 / (0.5 * (a + b) + CHI2_EPS)).sum(axis=1)
    med = float(np.median(dist))
    if med <= 0:
        raise DegenerateSet("median pairwise distance is zero")
    return KernelParams(1.0 / med)
