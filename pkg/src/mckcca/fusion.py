"""Late fusion of kernel-channel distances with L2-regularised logistic regression.

The fusion objective over weights ``r`` is

    0.5 r'r + C sum_i log(1 + exp(-y_i r'd_i))

where each profile ``d_i`` ends in a constant bias entry of 1, so the bias
weight is regularised like every other weight. A match probability is
``sigmoid(r'd)``; since ``d`` holds distances, a reliable kernel-channel has a
non-positive weight.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .bank import KccaConfig, ModelBank, ProfileLayout, train_bank
from .errors import AllChannelsDropped, TooFewIdentities


def add_bias(distances: np.ndarray) -> np.ndarray:
    """Append the constant bias entry along the last axis."""
    distances = np.asarray(distances, dtype=np.float64)
    return np.concatenate([distances, np.ones(distances.shape[:-1] + (1,))], axis=-1)


@dataclass(frozen=True)
class FusionWeights:
    r: np.ndarray
    active_mask: np.ndarray
    C: float
    history: tuple = ()
    capped: bool = False
    converged: bool = True
    info: dict = field(default_factory=dict, compare=False)

    @property
    def bias_index(self) -> int:
        return self.r.size - 1

    @property
    def dropped(self) -> list[int]:
        return [i for i, dropped in enumerate(~self.active_mask) if dropped]

    def effective(self) -> np.ndarray:
        return np.where(self.active_mask, self.r, 0.0)

    def scores(self, profiles: np.ndarray) -> np.ndarray:
        profiles = np.asarray(profiles, dtype=np.float64)
        if profiles.shape[-1] != self.r.size:
            raise ValueError(f"profile length {profiles.shape[-1]} != weight length {self.r.size}")
        return profiles @ self.effective()


def objective(r: np.ndarray, D: np.ndarray, y: np.ndarray, C: float,
              sample_weight: np.ndarray | None = None) -> float:
    z = y * (D @ r)
    loss = -log_expit(z)
    if sample_weight is not None:
        loss = loss * sample_weight
    return 0.5 * float(r @ r) + C * float(loss.sum())


def gradient(r: np.ndarray, D: np.ndarray, y: np.ndarray, C: float,
             sample_weight: np.ndarray | None = None) -> np.ndarray:
    coef = -y * expit(-y * (D @ r))
    if sample_weight is not None:
        coef = coef * sample_weight
    return r + C * (D.T @ coef)


def hessian(r: np.ndarray, D: np.ndarray, y: np.ndarray, C: float,
            sample_weight: np.ndarray | None = None) -> np.ndarray:
    p = expit(D @ r)
    s = p * (1 - p)
    if sample_weight is not None:
        s = s * sample_weight
    return np.eye(r.size) + C * (D.T * s) @ D


def _balanced_weights(y: np.ndarray) -> np.ndarray:
    n = y.size
    pos = np.sum(y > 0)
    return np.where(y > 0, n / (2 * pos), n / (2 * (n - pos)))


def _check_labels(profiles, labels):
    D = np.asarray(profiles, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if D.ndim != 2 or D.shape[0] != y.size:
        raise ValueError(f"profiles {D.shape} do not match {y.size} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("need at least one sample of each label")
    return D, y


def fit_logistic(profiles, labels, C: float = 1.0, active_mask=None, *,
                 tol: float = 1e-6, max_iter: int = 100, balanced: bool = False) -> FusionWeights:
    """Minimise the regularised logistic loss by damped Newton steps.

    Inactive entries are excluded from the fit and keep a zero weight. The
    objective never increases between iterates (Armijo backtracking).
    """
    D, y = _check_labels(profiles, labels)
    if C < 0:
        raise ValueError(f"C must be nonnegative, got {C}")
    mask = np.ones(D.shape[1], dtype=bool) if active_mask is None else np.asarray(active_mask, bool).copy()
    mask[-1] = True
    Da = D[:, mask]
    sw = _balanced_weights(y) if balanced else None

    r = np.zeros(Da.shape[1])
    f = objective(r, Da, y, C, sw)
    trace = [f]
    for _ in range(max_iter):
        g = gradient(r, Da, y, C, sw)
        if np.linalg.norm(g) <= tol:
            break
        step = np.linalg.solve(hessian(r, Da, y, C, sw), g)
        slope = float(g @ step)
        t = 1.0
        while t >= 1e-12:
            r_new = r - t * step
            f_new = objective(r_new, Da, y, C, sw)
            if f_new <= f - 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break  # stalled at machine precision
        r, f = r_new, f_new
        trace.append(f)
    converged = bool(np.linalg.norm(gradient(r, Da, y, C, sw)) <= tol)
    if not converged:
        warnings.warn("logistic fit did not reach the gradient tolerance; returning best iterate",
                      RuntimeWarning, stacklevel=2)

    full = np.zeros(D.shape[1])
    full[mask] = r
    return FusionWeights(full, mask, float(C), converged=converged,
                         info={"objective_trace": tuple(trace), "n_iter": len(trace) - 1})


def fit_filtered(profiles, labels, C: float = 1.0, *, max_rounds: int | None = None,
                 **kwargs) -> FusionWeights:
    """Refit while dropping every non-bias entry whose weight is positive.

    Stops when no active non-bias weight is positive, or after ``max_rounds``
    rounds (default: number of non-bias entries), in which case the result is
    flagged ``capped``. Weights exactly zero are kept.
    """
    D, y = _check_labels(profiles, labels)
    n_entries = D.shape[1] - 1
    max_rounds = n_entries if max_rounds is None else max_rounds
    mask = np.ones(D.shape[1], dtype=bool)
    history = []
    w = fit_logistic(D, y, C, mask, **kwargs)
    for it in range(1, max_rounds + 1):
        positive = [i for i in range(n_entries) if mask[i] and w.r[i] > 0]
        if not positive:
            return FusionWeights(w.r, mask, w.C, tuple(history), False, w.converged, w.info)
        mask[positive] = False
        history.append((it, tuple(positive)))
        if not mask[:n_entries].any():
            raise AllChannelsDropped("every kernel-channel received a positive weight")
        w = fit_logistic(D, y, C, mask, **kwargs)
    capped = any(mask[i] and w.r[i] > 0 for i in range(n_entries))
    if capped:
        warnings.warn("filtering stopped at the round cap with positive weights left",
                      RuntimeWarning, stacklevel=2)
    return FusionWeights(w.r, mask, w.C, tuple(history), capped, w.converged, w.info)


def match_probability(w: FusionWeights, d) -> float:
    """Probability that a profile describes a same-person pair."""
    return float(expit(w.scores(d)))


def rank_by_scores(scores) -> np.ndarray:
    """Indices by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def rank_gallery(w: FusionWeights, probe_profiles) -> np.ndarray:
    """Gallery permutation for one probe, best match first.

    Ranking uses the fused score ``r'd`` directly; the logistic is monotone,
    so the order equals the order of match probabilities without the ties
    that saturation to 1.0 would introduce.
    """
    return rank_by_scores(w.scores(np.atleast_2d(probe_profiles)))


def fold_split(n_ids: int, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Two halves of ``range(n_ids)``; shuffled when a seed is given.

    With an odd count the second half gets the extra identity.
    """
    order = np.arange(n_ids)
    if seed is not None:
        order = np.random.default_rng(seed).permutation(n_ids)
    half = n_ids // 2
    return np.sort(order[:half]), np.sort(order[half:])


def build_training_profiles(train_a: dict, train_b: dict, cfg: KccaConfig = KccaConfig(),
                            ids_a=None, ids_b=None, seed: int | None = None,
                            channels=None) -> tuple[np.ndarray, np.ndarray, ProfileLayout]:
    """Two-fold cross-validated distance profiles on the training set.

    ``train_a[ch]`` and ``train_b[ch]`` are row-aligned (same person in the
    same row). Identities are split into two halves; models trained on one
    half score every camera-b x camera-a pair of the other half. Returns
    ``(profiles, labels, layout)`` with profiles ordered fold by fold, then
    probe row, then gallery column.
    """
    first = next(iter(train_a.values()))
    n = first.shape[0]
    ids_a = np.arange(n) if ids_a is None else np.asarray(ids_a)
    ids_b = ids_a if ids_b is None else np.asarray(ids_b)
    uniq = np.unique(ids_a)
    if uniq.size < 4:
        raise TooFewIdentities(f"need at least 4 training identities, got {uniq.size}")
    h1, h2 = fold_split(uniq.size, seed)
    folds = [(uniq[h1], uniq[h2]), (uniq[h2], uniq[h1])]
    profiles, labels, layout = [], [], None
    for fit_ids, held_ids in folds:
        fit_rows = np.isin(ids_a, fit_ids)
        held_a = np.isin(ids_a, held_ids)
        held_b = np.isin(ids_b, held_ids)
        bank = train_bank({ch: X[fit_rows] for ch, X in train_a.items()},
                          {ch: X[fit_rows] for ch, X in train_b.items()}, cfg, channels)
        layout = bank.layout
        dist = bank.distances({ch: X[held_a] for ch, X in train_a.items()}, "a",
                              {ch: X[held_b] for ch, X in train_b.items()}, "b")
        same = ids_b[held_b][:, None] == ids_a[held_a][None, :]
        profiles.append(add_bias(dist).reshape(-1, layout.size))
        labels.append(np.where(same, 1, -1).ravel())
    return np.vstack(profiles), np.concatenate(labels), layout


def fuse_scores(w: FusionWeights, distances: np.ndarray) -> np.ndarray:
    """(p, g) fused scores from a (p, g, K) distance stack."""
    return w.scores(add_bias(distances))


def fit_bank_and_weights(train_a: dict, train_b: dict, cfg: KccaConfig = KccaConfig(),
                         C: float = 1.0, filtering: bool = True, ids_a=None, ids_b=None,
                         seed: int | None = None, balanced: bool = False
                         ) -> tuple[ModelBank, FusionWeights]:
    """Learn fusion weights by cross-validation, then retrain KCCA on all training data."""
    D, y, _ = build_training_profiles(train_a, train_b, cfg, ids_a, ids_b, seed)
    fit = fit_filtered if filtering else fit_logistic
    weights = fit(D, y, C, balanced=balanced)
    bank = train_bank(train_a, train_b, cfg)
    return bank, weights
