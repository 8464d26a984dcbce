"""On-disk formats: dataset layout, descriptor cache, KCCA models, fusion weights."""
from __future__ import annotations

import hashlib
import json
import re
import warnings
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .bank import BankEntry, ProfileLayout, array_hash
from .descriptor import ALL_CHANNELS, ChannelDescriptor, ChannelId
from .errors import DecodeError, HashMismatch, LayoutError
from .evaluation import Catalog, ImageRecord
from .fusion import FusionWeights
from .kcca import Centering, KccaModel
from .kernels import KernelKind, KernelParams

IMAGE_EXTS = (".png", ".jpg", ".jpeg")
_NAME = re.compile(r"^(?P<pid>[^_/]+)_(?P<shot>\d+)$")
CACHE_FORMAT = "mckcca-descriptors/1"
WEIGHTS_FORMAT = "mckcca-weights/1"


def scan_dataset(root) -> Catalog:
    """Catalog of ``<root>/cam_a/<pid>_<shot>.<ext>`` and ``cam_b`` images."""
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {root} is not a directory")
    cam_dirs = [root / "cam_a", root / "cam_b"]
    if not any(d.is_dir() for d in cam_dirs):
        if any(root.iterdir()):
            raise LayoutError(f"{root} has no cam_a/ or cam_b/ directory")
        return Catalog([])
    records = []
    for cam, d in zip("ab", cam_dirs):
        if not d.is_dir():
            continue
        for path in sorted(d.iterdir()):
            if path.suffix.lower() not in IMAGE_EXTS:
                continue
            m = _NAME.match(path.stem)
            if not m:
                raise LayoutError(f"{path}: expected <person_id>_<shot>{path.suffix}")
            records.append(ImageRecord(m["pid"], cam, int(m["shot"]), str(path)))
    return Catalog(records)


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def record_path(cache_dir, rec: ImageRecord) -> Path:
    return Path(cache_dir) / f"cam_{rec.camera}" / f"{rec.person_id}_{rec.shot}.json"


def write_descriptor_record(path, rec: ImageRecord, descriptors: list[ChannelDescriptor],
                            image_hash: str, descriptor_hash: str, config_hash: str) -> None:
    doc = {
        "header": {
            "format": CACHE_FORMAT,
            "dims": {str(d.channel): int(d.values.size) for d in descriptors},
            "image_hash": image_hash,
            "descriptor_hash": descriptor_hash,
            "config_hash": config_hash,
        },
        "image_id": rec.image_id,
        "camera_id": rec.camera,
        "person_id": rec.person_id,
        "sample_index": rec.shot,
        "channels": [{"family": d.channel.family, "component": d.channel.component,
                      "block_size": d.block_size, "block_norm": d.block_norm,
                      "values": d.values.tolist()} for d in descriptors],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, separators=(",", ":")))
    tmp.replace(path)


def read_header(path) -> dict | None:
    try:
        return json.loads(Path(path).read_text())["header"]
    except (OSError, ValueError, KeyError):
        return None


def read_descriptor_record(path) -> tuple[ImageRecord, dict, list[ChannelDescriptor]]:
    doc = json.loads(Path(path).read_text())
    header = doc["header"]
    if header.get("format") != CACHE_FORMAT:
        raise DecodeError(f"{path}: unknown descriptor format {header.get('format')!r}")
    descs = []
    for ch in doc["channels"]:
        cid = ChannelId(ch["family"], ch["component"])
        values = np.asarray(ch["values"], dtype=np.float64)
        if header["dims"].get(str(cid)) != values.size:
            raise DecodeError(f"{path}: {cid} has {values.size} values, header says "
                              f"{header['dims'].get(str(cid))}")
        descs.append(ChannelDescriptor(cid, values, ch["block_size"], ch["block_norm"]))
    rec = ImageRecord(doc["person_id"], doc["camera_id"], int(doc["sample_index"]))
    return rec, header, descs


def load_cache(cache_dir, descriptor_hash: str | None = None) -> tuple[Catalog, dict]:
    """Catalog and channel -> (N, d) matrices for every record in a cache."""
    cache_dir = Path(cache_dir)
    paths = sorted(cache_dir.glob("cam_*/*.json"))
    records, rows, dims = [], [], None
    for p in paths:
        rec, header, descs = read_descriptor_record(p)
        if descriptor_hash is not None and header["descriptor_hash"] != descriptor_hash:
            raise HashMismatch(f"{p} was extracted with different descriptor settings; rerun extract")
        if dims is None:
            dims = header["dims"]
        elif header["dims"] != dims:
            raise DecodeError(f"{p}: descriptor dimensions differ from the rest of the cache")
        records.append(rec)
        rows.append([d.values for d in descs])
    if not records:
        return Catalog([]), {}
    features = {ch: np.vstack([r[k] for r in rows]) for k, ch in enumerate(ALL_CHANNELS)}
    return Catalog(records), features


def model_filename(channel: ChannelId, kind: KernelKind) -> str:
    return f"{channel}__{kind}.npz"


def save_model(path, entry: BankEntry, train_ids_a, train_ids_b, config_hash: str) -> None:
    m = entry.model
    np.savez(
        path,
        alpha=m.alpha, beta=m.beta, lam=m.lam, kappa=np.asarray(m.kappa),
        col_mean_a=m.centering_a.col_mean, total_mean_a=m.centering_a.total_mean,
        col_mean_b=m.centering_b.col_mean, total_mean_b=m.centering_b.total_mean,
        gamma=np.asarray([entry.params_a.gamma, entry.params_b.gamma]),
        channel=str(m.channel), kind=str(m.kind),
        train_hash=array_hash(entry.train_a, entry.train_b),
        train_ids_a=np.asarray(train_ids_a, dtype=str), train_ids_b=np.asarray(train_ids_b, dtype=str),
        config_hash=config_hash,
    )


def load_model(path) -> tuple[KccaModel, dict]:
    with np.load(path) as z:
        channel = ChannelId.parse(str(z["channel"]))
        kind = KernelKind(str(z["kind"]))
        model = KccaModel(
            z["alpha"], z["beta"], z["lam"], tuple(float(k) for k in z["kappa"]),
            Centering(z["col_mean_a"], float(z["total_mean_a"])),
            Centering(z["col_mean_b"], float(z["total_mean_b"])),
            channel, kind)
        meta = {"gamma": tuple(float(g) for g in z["gamma"]), "train_hash": str(z["train_hash"]),
                "train_ids_a": list(z["train_ids_a"]), "train_ids_b": list(z["train_ids_b"]),
                "config_hash": str(z["config_hash"])}
    return model, meta


def rebuild_entry(model: KccaModel, meta: dict, train_a: np.ndarray, train_b: np.ndarray) -> BankEntry:
    """Pair a loaded model with its training descriptors, checking the stored hash."""
    if array_hash(train_a, train_b) != meta["train_hash"]:
        raise HashMismatch(f"training descriptors for {model.channel}/{model.kind} changed since training")
    ga, gb = meta["gamma"]
    return BankEntry(model, train_a, train_b, KernelParams(ga), KernelParams(gb))


def save_weights(path, w: FusionWeights, layout: ProfileLayout, config_hash: str) -> None:
    doc = {
        "format": WEIGHTS_FORMAT,
        "config_hash": config_hash,
        "index": [{"index": i, "channel": str(ch), "kernel": str(k)}
                  for i, (ch, k) in enumerate(layout.entries)] + [{"index": layout.bias_index, "channel": "bias", "kernel": None}],
        "r": [float(v) for v in w.r],
        "active_mask": [bool(v) for v in w.active_mask],
        "C": w.C,
        "history": [{"iteration": it, "dropped": list(ids)} for it, ids in w.history],
        "capped": w.capped,
        "converged": w.converged,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_weights(path) -> tuple[FusionWeights, ProfileLayout, str]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != WEIGHTS_FORMAT:
        raise DecodeError(f"{path}: unknown weights format {doc.get('format')!r}")
    entries = tuple((ChannelId.parse(e["channel"]), KernelKind(e["kernel"]))
                    for e in doc["index"] if e["channel"] != "bias")
    w = FusionWeights(np.asarray(doc["r"]), np.asarray(doc["active_mask"], dtype=bool), doc["C"],
                      tuple((h["iteration"], tuple(h["dropped"])) for h in doc["history"]),
                      doc["capped"], doc["converged"])
    if w.r.size != len(entries) + 1:
        raise DecodeError(f"{path}: {w.r.size} weights for {len(entries)} kernel-channels")
    return w, ProfileLayout(entries), doc["config_hash"]


def warn_empty(what: str) -> None:
    warnings.warn(f"{what} is empty", RuntimeWarning, stacklevel=2)
