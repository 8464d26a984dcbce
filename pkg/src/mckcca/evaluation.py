"""Split protocols, CMC curves, trial averaging and filtering statistics."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientIdentities, MissingTruth, ShapeMismatch
from .fusion import rank_by_scores

REPORT_RANKS = (1, 10, 20, 50, 100)


class SplitKind(str, enum.Enum):
    HalfSplit = "HalfSplit"
    DistractorGallery = "DistractorGallery"
    MultiShot = "MultiShot"


_DEFAULT_GALLERY_CAMERA = {
    SplitKind.HalfSplit: "a",
    SplitKind.DistractorGallery: "b",
    SplitKind.MultiShot: "b",
}


@dataclass(frozen=True)
class SplitProtocol:
    """How identities are divided into training, gallery and probe sets.

    ``gallery_camera`` defaults per kind: camera a for half splits (VIPeR,
    PRID 450s), camera b for the distractor gallery (PRID) and multi-shot
    (CUHK01) protocols.
    """

    kind: SplitKind = SplitKind.HalfSplit
    seed: int = 0
    trial_count: int = 10
    shots_per_id: int = 1
    gallery_camera: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SplitKind(self.kind))
        if self.trial_count < 1:
            raise ValueError("trial_count must be >= 1")
        if self.shots_per_id not in (1, 2):
            raise ValueError("shots_per_id must be 1 or 2")
        if self.gallery_camera is None:
            object.__setattr__(self, "gallery_camera", _DEFAULT_GALLERY_CAMERA[self.kind])
        if self.gallery_camera not in ("a", "b"):
            raise ValueError("gallery_camera must be 'a' or 'b'")

    @property
    def probe_camera(self) -> str:
        return "b" if self.gallery_camera == "a" else "a"


@dataclass(frozen=True)
class ImageRecord:
    person_id: str
    camera: str
    shot: int = 0
    path: str | None = None

    @property
    def image_id(self) -> str:
        return f"{self.camera}/{self.person_id}_{self.shot}"


@dataclass
class Catalog:
    records: list[ImageRecord]

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_counts(cls, shared: int, only_a: int = 0, only_b: int = 0,
                    shots: int = 1) -> "Catalog":
        """Synthetic catalog with ``shared`` identities seen by both cameras."""
        recs = []
        for i in range(shared):
            for cam in "ab":
                recs += [ImageRecord(f"s{i:05d}", cam, k) for k in range(shots)]
        recs += [ImageRecord(f"a{i:05d}", "a", k) for i in range(only_a) for k in range(shots)]
        recs += [ImageRecord(f"b{i:05d}", "b", k) for i in range(only_b) for k in range(shots)]
        return cls(recs)

    def index(self) -> dict:
        """(camera, person_id) -> record indices sorted by shot."""
        out: dict = {}
        for i, r in enumerate(self.records):
            out.setdefault((r.camera, r.person_id), []).append(i)
        for key in out:
            out[key].sort(key=lambda i: self.records[i].shot)
        return out

    def person_ids(self, indices) -> np.ndarray:
        return np.array([self.records[i].person_id for i in indices], dtype=object)


@dataclass(frozen=True)
class Split:
    train_a: np.ndarray
    train_b: np.ndarray
    gallery: np.ndarray
    probe: np.ndarray
    gallery_camera: str
    probe_camera: str
    train_ids: tuple
    test_ids: tuple


def _pairs(by_key, ids, shots):
    a, b = [], []
    for pid in ids:
        sa, sb = by_key[("a", pid)], by_key[("b", pid)]
        k = min(len(sa), len(sb), shots)
        a += sa[:k]
        b += sb[:k]
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)


def _shots(by_key, cam, ids, shots):
    out = []
    for pid in ids:
        out += by_key[(cam, pid)][:shots]
    return np.array(out, dtype=np.int64)


def _catalog_sets(catalog: Catalog, proto: SplitProtocol):
    by_key = catalog.index()
    cams = {"a": sorted({p for c, p in by_key if c == "a"}),
            "b": sorted({p for c, p in by_key if c == "b"})}
    shared = sorted(set(cams["a"]) & set(cams["b"]))
    if len(shared) < 2:
        raise InsufficientIdentities(f"need at least 2 shared identities, got {len(shared)}")
    if proto.kind is SplitKind.MultiShot and proto.shots_per_id == 2:
        short = [p for p in shared
                 if len(by_key[("a", p)]) < 2 or len(by_key[("b", p)]) < 2]
        if short:
            raise InsufficientIdentities(f"{len(short)} identities lack two shots per camera")
    distractors = sorted(set(cams[proto.gallery_camera]) - set(shared))
    return by_key, shared, distractors


def _split(by_key, proto, train_ids, test_ids, distractors) -> Split:
    gcam, pcam = proto.gallery_camera, proto.probe_camera
    shots = proto.shots_per_id if proto.kind is SplitKind.MultiShot else 1
    ta, tb = _pairs(by_key, train_ids, shots)
    gallery_ids = test_ids + (distractors if proto.kind is SplitKind.DistractorGallery else [])
    return Split(ta, tb, _shots(by_key, gcam, gallery_ids, shots),
                 _shots(by_key, pcam, test_ids, shots), gcam, pcam,
                 tuple(train_ids), tuple(test_ids))


def make_splits(catalog: Catalog, proto: SplitProtocol) -> list[Split]:
    """One (train, gallery, probe) split per trial, deterministic in the seed.

    Identities seen by both cameras are shuffled and halved (the smaller half
    trains). Under ``DistractorGallery`` every gallery-camera identity that
    the probe camera never sees is added to the gallery.
    """
    by_key, shared, distractors = _catalog_sets(catalog, proto)
    splits = []
    for t in range(proto.trial_count):
        rng = np.random.default_rng([proto.seed, t])
        order = [shared[i] for i in rng.permutation(len(shared))]
        n_train = len(shared) // 2
        splits.append(_split(by_key, proto, sorted(order[:n_train]), sorted(order[n_train:]),
                             distractors))
    return splits


def splits_from_test_ids(catalog: Catalog, proto: SplitProtocol, test_id_lists) -> list[Split]:
    """Splits from externally supplied test identities, one list per trial.

    Every other identity seen by both cameras trains.
    """
    by_key, shared, distractors = _catalog_sets(catalog, proto)
    splits = []
    for ids in test_id_lists:
        test = sorted(str(i) for i in ids)
        unknown = set(test) - set(shared)
        if unknown:
            raise InsufficientIdentities(f"{len(unknown)} test identities are not seen by both cameras")
        train = sorted(set(shared) - set(test))
        splits.append(_split(by_key, proto, train, test, distractors))
    return splits


@dataclass(frozen=True)
class CmcCurve:
    values: np.ndarray
    gallery_size: int
    std: np.ndarray | None = None

    def at(self, rank: int) -> float:
        """CMC value at a 1-based rank, saturating past the gallery size."""
        return float(self.values[min(rank, self.gallery_size) - 1])

    def summary(self, ranks=REPORT_RANKS) -> dict:
        out = {}
        for k in ranks:
            entry = {"mean": self.at(k)}
            if self.std is not None:
                entry["std"] = float(self.std[min(k, self.gallery_size) - 1])
            out[str(k)] = entry
        return out


def match_ranks(rankings, probe_ids, gallery_ids, aggregation: str = "single",
                require_match: bool = True) -> np.ndarray:
    """0-based rank of the true match for each probe (``inf`` when absent)."""
    gallery_ids = np.asarray(gallery_ids, dtype=object)
    out = np.empty(len(probe_ids))
    for i, (perm, pid) in enumerate(zip(rankings, probe_ids)):
        hits = np.flatnonzero(gallery_ids[np.asarray(perm)] == pid)
        if hits.size == 0:
            if require_match:
                raise MissingTruth(f"probe identity {pid!r} has no gallery image")
            out[i] = np.inf
            continue
        if aggregation == "single" and hits.size > 1:
            raise ValueError(f"probe {pid!r} has {hits.size} gallery matches; "
                             "use aggregation='min_over_shots'")
        out[i] = hits[0]
    return out


def compute_cmc(rankings, probe_ids, gallery_ids, aggregation: str = "single",
                require_match: bool = True) -> CmcCurve:
    """CMC from per-probe gallery permutations.

    ``min_over_shots`` scores a probe at the best-ranked gallery image of its
    identity. Normalised by the number of probes.
    """
    if aggregation not in ("single", "min_over_shots"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    g = len(gallery_ids)
    ranks = match_ranks(rankings, probe_ids, gallery_ids, aggregation, require_match)
    counts = np.bincount(ranks[np.isfinite(ranks)].astype(np.int64), minlength=g)[:g]
    return CmcCurve(np.cumsum(counts) / max(len(ranks), 1), g)


def cmc_from_scores(scores: np.ndarray, probe_ids, gallery_ids,
                    aggregation: str = "single", require_match: bool = True) -> CmcCurve:
    """CMC from a (p, g) score matrix, higher meaning more similar."""
    rankings = [rank_by_scores(row) for row in np.atleast_2d(scores)]
    return compute_cmc(rankings, probe_ids, gallery_ids, aggregation, require_match)


def average_trials(curves: list[CmcCurve]) -> CmcCurve:
    """Elementwise mean with the population standard deviation in ``std``."""
    if not curves:
        raise ShapeMismatch("no curves to average")
    sizes = {c.gallery_size for c in curves} | {c.values.size for c in curves}
    if len(sizes) != 1:
        raise ShapeMismatch(f"curves have different gallery sizes: {sorted(sizes)}")
    stack = np.vstack([c.values for c in curves])
    return CmcCurve(stack.mean(axis=0), curves[0].gallery_size, stack.std(axis=0))


@dataclass(frozen=True)
class FilterFrequency:
    counts: np.ndarray  # (channels, kernels)
    channels: tuple
    kernels: tuple
    trial_count: int
    channel_totals: np.ndarray = field(init=False)
    kernel_totals: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "channel_totals", self.counts.sum(axis=1))
        object.__setattr__(self, "kernel_totals", self.counts.sum(axis=0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel"] + [str(k) for k in self.kernels] + ["total"])
        for ch, row, tot in zip(self.channels, self.counts, self.channel_totals):
            w.writerow([str(ch)] + [int(v) for v in row] + [int(tot)])
        w.writerow(["total"] + [int(v) for v in self.kernel_totals] + [int(self.counts.sum())])
        return buf.getvalue()


def filtering_report(weight_histories, layout) -> FilterFrequency:
    """Count, over trials, how often each (channel, kernel) entry was dropped."""
    weight_histories = list(weight_histories)
    if not weight_histories:
        raise ValueError("need at least one trial")
    channels, kernels = layout.channels, layout.kernels
    counts = np.zeros((len(channels), len(kernels)), dtype=np.int64)
    for w in weight_histories:
        for idx in w.dropped:
            if idx == layout.bias_index:
                continue
            ch, k = layout.entries[idx]
            counts[channels.index(ch), kernels.index(k)] += 1
    return FilterFrequency(counts, channels, kernels, len(weight_histories))


def cmc_csv(curve: CmcCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "mean", "std"])
    std = curve.std if curve.std is not None else np.zeros_like(curve.values)
    for k, (m, s) in enumerate(zip(curve.values, std), start=1):
        w.writerow([k, f"{m:.6f}", f"{s:.6f}"])
    return buf.getvalue()
