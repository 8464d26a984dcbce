"""One KCCA model per (channel, kernel) pair and the stacked distances they yield."""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .descriptor import ALL_CHANNELS, ChannelId
from .kcca import KccaModel, cosine_distances, project, train_kcca
from .kernels import ALL_KERNELS, KernelKind, KernelParams, bandwidth_heuristic, gram


@dataclass(frozen=True)
class ProfileLayout:
    """Canonical order of kernel-channels in a distance profile.

    Channel-major: all kernels of the first channel, then the next channel.
    The bias slot comes last.
    """

    entries: tuple[tuple[ChannelId, KernelKind], ...]

    @classmethod
    def build(cls, channels=ALL_CHANNELS, kernels=ALL_KERNELS) -> "ProfileLayout":
        return cls(tuple((ch, KernelKind(k)) for ch in channels for k in kernels))

    @property
    def n_entries(self) -> int:
        return len(self.entries)

    @property
    def size(self) -> int:
        return len(self.entries) + 1

    @property
    def bias_index(self) -> int:
        return len(self.entries)

    @property
    def channels(self) -> tuple[ChannelId, ...]:
        return tuple(dict.fromkeys(ch for ch, _ in self.entries))

    @property
    def kernels(self) -> tuple[KernelKind, ...]:
        return tuple(dict.fromkeys(k for _, k in self.entries))

    def names(self) -> list[str]:
        return [f"{ch}/{k}" for ch, k in self.entries] + ["bias"]

    def index(self, channel: ChannelId, kind: KernelKind) -> int:
        return self.entries.index((channel, KernelKind(kind)))


@dataclass(frozen=True)
class KccaConfig:
    kernels: tuple = ALL_KERNELS
    kappa: float = 0.5
    M: int | None = None
    min_lambda: float = 1e-4
    center: bool = True
    bandwidth_pairs: int = 1000
    seed: int = 0
    workers: int = 1


@dataclass
class BankEntry:
    model: KccaModel
    train_a: np.ndarray
    train_b: np.ndarray
    params_a: KernelParams
    params_b: KernelParams


def array_hash(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def _params(X: np.ndarray, kind: KernelKind, cfg: KccaConfig) -> KernelParams:
    if not kind.needs_gamma:
        return KernelParams()
    return bandwidth_heuristic(X, kind, cfg.bandwidth_pairs, cfg.seed)


def train_entry(Xa: np.ndarray, Xb: np.ndarray, channel: ChannelId, kind: KernelKind,
                cfg: KccaConfig) -> BankEntry:
    pa, pb = _params(Xa, kind, cfg), _params(Xb, kind, cfg)
    Kaa = gram(Xa, Xa, kind, pa).values
    Kbb = gram(Xb, Xb, kind, pb).values
    model = train_kcca(Kaa, Kbb, cfg.kappa, cfg.M, center=cfg.center,
                       min_lambda=cfg.min_lambda, channel=channel, kind=kind)
    model.meta.update(train_hash=array_hash(Xa, Xb), gamma_a=pa.gamma, gamma_b=pb.gamma)
    return BankEntry(model, Xa, Xb, pa, pb)


@dataclass
class ModelBank:
    layout: ProfileLayout
    entries: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def project(self, X: dict, view: str) -> dict:
        """Project a descriptor set (channel -> (k, d) matrix) into every model's space."""
        out = {}
        for (ch, kind), e in self.entries.items():
            train, params = (e.train_a, e.params_a) if view == "a" else (e.train_b, e.params_b)
            K = gram(X[ch], train, kind, params).values
            out[(ch, kind)] = project(e.model, K, view).rows
        return out

    def distances(self, gallery: dict, gallery_view: str, probe: dict, probe_view: str) -> np.ndarray:
        """(p, g, K) cosine distances in layout order."""
        G = self.project(gallery, gallery_view)
        P = self.project(probe, probe_view)
        return np.stack([cosine_distances(G[key], P[key]).values
                         for key in self.layout.entries], axis=-1)


def train_bank(train_a: dict, train_b: dict, cfg: KccaConfig = KccaConfig(),
               channels=None) -> ModelBank:
    """Train every (channel, kernel) model on row-aligned training descriptors."""
    channels = tuple(channels) if channels is not None else tuple(train_a)
    layout = ProfileLayout.build(channels, cfg.kernels)
    jobs = [(ch, kind) for ch, kind in layout.entries]

    def run(job):
        ch, kind = job
        return train_entry(train_a[ch], train_b[ch], ch, kind, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return ModelBank(layout, dict(zip(jobs, results)))
