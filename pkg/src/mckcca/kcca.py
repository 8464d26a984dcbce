"""Regularised kernel CCA, eigenvalue-weighted projection and cosine matching.

Training works on centred Gram matrices. Each view's Gram is factored as
``K = U diag(s) U^T``, which gives explicit feature coordinates
``Phi = U diag(sqrt(s))``. Regularised KCCA is then ridge CCA in those
coordinates: whitening each view by ``(diag(s) + kappa I)^(-1/2)`` and taking
the SVD of the whitened cross-covariance. The singular values are the
canonical correlations, and the dual weights satisfy

    (Ka + kappa I)^-1 Kb (Kb + kappa I)^-1 Ka alpha = lambda^2 alpha
    beta = (Kb + kappa I)^-1 Ka alpha / lambda

on the retained eigenspace. No unsymmetric eigensolver is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFinite, SingularSystem


@dataclass(frozen=True)
class Centering:
    """Statistics of a training Gram needed to centre new kernel rows."""

    col_mean: np.ndarray
    total_mean: float

    @classmethod
    def identity(cls, n: int) -> "Centering":
        return cls(np.zeros(n), 0.0)


def center_gram(K: np.ndarray) -> tuple[np.ndarray, Centering]:
    col_mean = K.mean(axis=0)
    total = float(col_mean.mean())
    Kc = K - col_mean[None, :] - K.mean(axis=1)[:, None] + total
    return 0.5 * (Kc + Kc.T), Centering(col_mean, total)


def center_cross(K_cross: np.ndarray, c: Centering) -> np.ndarray:
    """Centre an (k, n) kernel block against the training set of ``c``."""
    return K_cross - K_cross.mean(axis=1)[:, None] - c.col_mean[None, :] + c.total_mean


@dataclass(frozen=True)
class KccaModel:
    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    kappa: tuple[float, float]
    centering_a: Centering
    centering_b: Centering
    channel: object = None
    kind: object = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.lam.size

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class ProjectedFeatures:
    rows: np.ndarray
    side: str


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    channel: object = None
    kind: object = None


def _eig_factor(K: np.ndarray, rank_tol: float):
    s, U = np.linalg.eigh(K)
    order = np.argsort(s)[::-1]
    s, U = s[order], U[:, order]
    top = s[0] if s.size and s[0] > 0 else 0.0
    keep = s > max(rank_tol * top, 0.0)
    return s[keep], U[:, keep]


def _kappas(kappa) -> tuple[float, float]:
    if np.ndim(kappa) == 0:
        ka = kb = float(kappa)
    else:
        ka, kb = (float(k) for k in kappa)
    if ka < 0 or kb < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    return ka, kb


def train_kcca(Kaa, Kbb, kappa=0.5, M: int | None = None, *, center: bool = True,
               min_lambda: float = 1e-4, rank_tol: float = 1e-10,
               channel=None, kind=None) -> KccaModel:
    """Fit KCCA between two row-aligned views given their training Grams.

    Parameters
    ----------
    Kaa, Kbb : (n, n) self-Gram matrices of camera a and camera b.
    kappa : regulariser, either shared or a ``(kappa_a, kappa_b)`` pair.
    M : maximum number of canonical directions kept, default ``min(n, 100)``.
    min_lambda : directions with a canonical correlation below this are dropped.

    Columns of ``alpha`` and ``beta`` are scaled so that the training variates
    ``Kaa @ alpha`` and ``Kbb @ beta`` have unit Euclidean norm.
    """
    Kaa = np.asarray(Kaa, dtype=np.float64)
    Kbb = np.asarray(Kbb, dtype=np.float64)
    n = Kaa.shape[0]
    if Kaa.shape != (n, n) or Kbb.shape != (n, n):
        raise DimensionMismatch(f"Gram shapes {Kaa.shape} and {Kbb.shape} are not matching squares")
    if n < 2:
        raise ValueError("KCCA needs at least two training pairs")
    ka, kb = _kappas(kappa)
    M = min(n, 100) if M is None else int(M)
    if not 0 <= M <= n:
        raise ValueError(f"M must be in [0, {n}], got {M}")
    if not (np.all(np.isfinite(Kaa)) and np.all(np.isfinite(Kbb))):
        raise NonFinite("Gram matrix contains non-finite entries")

    if center:
        Ka, cen_a = center_gram(Kaa)
        Kb, cen_b = center_gram(Kbb)
    else:
        Ka, cen_a = Kaa, Centering.identity(n)
        Kb, cen_b = Kbb, Centering.identity(n)

    try:
        sa, Ua = _eig_factor(Ka, rank_tol)
        sb, Ub = _eig_factor(Kb, rank_tol)
    except np.linalg.LinAlgError as exc:
        raise NonFinite(f"eigendecomposition failed: {exc}") from exc
    full_rank = n - 1 if center else n
    if (ka == 0 and sa.size < full_rank) or (kb == 0 and sb.size < full_rank):
        raise SingularSystem("kappa = 0 with a rank-deficient Gram matrix")
    if sa.size == 0 or sb.size == 0:
        empty = np.zeros((n, 0))
        return KccaModel(empty, empty.copy(), np.zeros(0), (ka, kb), cen_a, cen_b, channel, kind)

    ta = 1.0 / np.sqrt(sa + ka)
    tb = 1.0 / np.sqrt(sb + kb)
    cross = (ta * np.sqrt(sa))[:, None] * (Ua.T @ Ub) * (tb * np.sqrt(sb))[None, :]
    try:
        P, rho, Qt = np.linalg.svd(cross, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NonFinite(f"SVD failed to converge: {exc}") from exc

    keep = min(M, int(np.sum(rho >= min_lambda)))
    rho = rho[:keep]
    alpha = Ua @ ((ta / np.sqrt(sa))[:, None] * P[:, :keep])
    beta = Ub @ ((tb / np.sqrt(sb))[:, None] * Qt[:keep].T)
    alpha /= np.linalg.norm(Ka @ alpha, axis=0)
    beta /= np.linalg.norm(Kb @ beta, axis=0)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta)) and np.all(np.isfinite(rho))):
        raise NonFinite("KCCA solution is not finite")
    return KccaModel(alpha, beta, rho, (ka, kb), cen_a, cen_b, channel, kind)


_SIDES = {"gallery": "a", "a": "a", "probe": "b", "b": "b"}


def project(model: KccaModel, K_cross, side: str) -> ProjectedFeatures:
    """Project new images given their kernel rows against one view's training set.

    ``side`` picks the view: ``"gallery"``/``"a"`` uses alpha, ``"probe"``/``"b"``
    uses beta. Output columns are scaled by the canonical correlations.
    """
    view = _SIDES[side]
    K_cross = np.atleast_2d(np.asarray(K_cross, dtype=np.float64))
    if K_cross.shape[1] != model.n:
        raise DimensionMismatch(f"kernel rows have {K_cross.shape[1]} columns, model expects {model.n}")
    W, cen = (model.alpha, model.centering_a) if view == "a" else (model.beta, model.centering_b)
    rows = (center_cross(K_cross, cen) @ W) * model.lam[None, :]
    return ProjectedFeatures(rows, side)


def cosine_distances(G: ProjectedFeatures | np.ndarray, P: ProjectedFeatures | np.ndarray,
                     channel=None, kind=None) -> DistanceMatrix:
    """(p, g) matrix of ``1 - cos(p_i, g_j)``; zero vectors sit at distance 1."""
    g = G.rows if isinstance(G, ProjectedFeatures) else np.atleast_2d(G)
    p = P.rows if isinstance(P, ProjectedFeatures) else np.atleast_2d(P)
    if g.shape[1] != p.shape[1]:
        raise DimensionMismatch(f"projection widths differ: {g.shape[1]} vs {p.shape[1]}")
    gn = np.linalg.norm(g, axis=1)
    pn = np.linalg.norm(p, axis=1)
    gu = np.divide(g, gn[:, None], out=np.zeros_like(g), where=gn[:, None] > 0)
    pu = np.divide(p, pn[:, None], out=np.zeros_like(p), where=pn[:, None] > 0)
    D = np.clip(1.0 - pu @ gu.T, 0.0, 2.0)
    return DistanceMatrix(D, channel, kind)
