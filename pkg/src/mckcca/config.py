"""Pipeline configuration loaded from a YAML (or JSON) document.

Schema (every key optional, defaults shown)::

    dataset_root: data          # <root>/cam_a/<person>_<shot>.png, <root>/cam_b/...
    output_dir: runs/default    # descriptor cache, models, weights, reports
    seed: 0
    workers: 1
    protocol: {kind: HalfSplit, trial_count: 10, shots_per_id: 1, gallery_camera: null}
    descriptor: {hs_bins: 16, rgb_bins: 32, lab_bins: 32, stripe_height: 16,
                 stripe_stride: 8, sigma_x: 16.0, sigma_y: .inf, border: 6,
                 hog_cell: 8, hog_block: 2, hog_bins: 4, hog_eps: 1.0}
    kcca: {kernels: [Linear, Rbf, Chi2, ExpChi2], kappa: 0.5, M: null,
           min_lambda: 1.0e-4, center: true, bandwidth_pairs: 1000}
    fusion: {C: 1.0, filtering: true, balanced: false}
    synth: {identity_count: 100, shots: 1, gain_b: [0.75, 1.0, 1.3],
            offset_b: [25, 0, -20], noise: 0.6, distractors_a: 0, distractors_b: 0}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bank import KccaConfig
from .descriptor import DescriptorConfig
from .errors import ConfigError
from .evaluation import SplitKind, SplitProtocol
from .kernels import KernelKind
from .synth import SyntheticSpec


@dataclass(frozen=True)
class FusionConfig:
    C: float = 1.0
    filtering: bool = True
    balanced: bool = False


_DESCRIPTOR_KEYS = [f.name for f in dataclasses.fields(DescriptorConfig) if f.name != "components"]


@dataclass(frozen=True)
class PipelineConfig:
    dataset_root: str = "data"
    output_dir: str = "runs/default"
    seed: int = 0
    workers: int = 1
    protocol: SplitProtocol = field(default_factory=SplitProtocol)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    kcca: KccaConfig = field(default_factory=KccaConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def to_dict(self) -> dict:
        p = self.protocol
        return {
            "dataset_root": str(self.dataset_root),
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "workers": self.workers,
            "protocol": {"kind": p.kind.value, "trial_count": p.trial_count,
                         "shots_per_id": p.shots_per_id, "gallery_camera": p.gallery_camera},
            "descriptor": {k: getattr(self.descriptor, k) for k in _DESCRIPTOR_KEYS},
            "kcca": {"kernels": [str(k) for k in self.kcca.kernels], "kappa": self.kcca.kappa,
                     "M": self.kcca.M, "min_lambda": self.kcca.min_lambda,
                     "center": self.kcca.center, "bandwidth_pairs": self.kcca.bandwidth_pairs},
            "fusion": dataclasses.asdict(self.fusion),
            "synth": {k: (list(v) if isinstance(v, tuple) else v)
                      for k, v in dataclasses.asdict(self.synth).items() if k != "seed"},
        }

    def config_hash(self) -> str:
        """Hash of every setting that can change results (paths and workers excluded)."""
        d = self.to_dict()
        for key in ("dataset_root", "output_dir", "workers"):
            d.pop(key)
        return _hash(d)

    def descriptor_hash(self) -> str:
        return _hash(self.to_dict()["descriptor"])

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "PipelineConfig":
        d = self.to_dict()
        if seed is not None:
            d["seed"] = seed
        if output_dir is not None:
            d["output_dir"] = output_dir
        return from_dict(d)


def _hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _section(d: dict, key: str, allowed) -> dict:
    sec = d.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {sorted(unknown)}")
    return sec


def from_dict(d: dict) -> PipelineConfig:
    d = dict(d or {})
    top = {"dataset_root", "output_dir", "seed", "workers", "protocol", "descriptor",
           "kcca", "fusion", "synth"}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        seed = int(d.get("seed", 0))
        workers = int(d.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        p = _section(d, "protocol", ["kind", "trial_count", "shots_per_id", "gallery_camera"])
        protocol = SplitProtocol(kind=SplitKind(p.get("kind", "HalfSplit")), seed=seed,
                                 trial_count=int(p.get("trial_count", 10)),
                                 shots_per_id=int(p.get("shots_per_id", 1)),
                                 gallery_camera=p.get("gallery_camera"))
        desc = _section(d, "descriptor", _DESCRIPTOR_KEYS)
        descriptor = DescriptorConfig(**{k: (float(v) if k.startswith("sigma") else v)
                                         for k, v in desc.items()})
        k = _section(d, "kcca", ["kernels", "kappa", "M", "min_lambda", "center", "bandwidth_pairs"])
        kernels = tuple(KernelKind(x) for x in k.get("kernels", [x.value for x in KernelKind]))
        if not kernels:
            raise ConfigError("at least one kernel is required")
        kcca = KccaConfig(kernels=kernels, kappa=float(k.get("kappa", 0.5)),
                          M=None if k.get("M") is None else int(k["M"]),
                          min_lambda=float(k.get("min_lambda", 1e-4)),
                          center=bool(k.get("center", True)),
                          bandwidth_pairs=int(k.get("bandwidth_pairs", 1000)),
                          seed=seed, workers=workers)
        if kcca.kappa <= 0:
            raise ConfigError("kcca.kappa must be > 0")
        f = _section(d, "fusion", ["C", "filtering", "balanced"])
        fusion = FusionConfig(C=float(f.get("C", 1.0)), filtering=bool(f.get("filtering", True)),
                              balanced=bool(f.get("balanced", False)))
        if fusion.C <= 0:
            raise ConfigError("fusion.C must be > 0")
        s = _section(d, "synth", [x.name for x in dataclasses.fields(SyntheticSpec) if x.name != "seed"])
        s = {key: (tuple(v) if isinstance(v, list) else v) for key, v in s.items()}
        synth = SyntheticSpec(seed=seed, **s)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(str(d.get("dataset_root", "data")), str(d.get("output_dir", "runs/default")),
                          seed, workers, protocol, descriptor, kcca, fusion, synth)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping")
    cfg = from_dict(data or {})
    root = Path(cfg.dataset_root)
    if not root.is_absolute():
        cfg = dataclasses.replace(cfg, dataset_root=str((path.parent / root).resolve()))
    out = Path(cfg.output_dir)
    if not out.is_absolute():
        cfg = dataclasses.replace(cfg, output_dir=str((path.parent / out).resolve()))
    return cfg
