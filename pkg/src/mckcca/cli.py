"""Command line entry point: ``mckcca {synth,extract,train,eval}``.

Every subcommand takes ``--config``, ``--seed`` and ``--out``. Exit status is
0 on success, 2 on validation errors (bad config, layout, hash mismatch) and 1
on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import storage
from .bank import ModelBank, ProfileLayout, train_bank
from .config import PipelineConfig, from_dict, load_config
from .descriptor import extract_all, gaussian_weight_map, normalize_image
from .errors import ConfigError, HashMismatch, LayoutError
from .evaluation import (average_trials, cmc_csv, cmc_from_scores, filtering_report,
                         make_splits)
from .fusion import build_training_profiles, fit_filtered, fit_logistic, fuse_scores
from .pipeline import raw_cosine_scores, subset
from .synth import write_dataset

log = logging.getLogger("mckcca")


def _extract_one(args):
    path, cfg = args
    img = normalize_image(storage.load_image(path))
    return extract_all(img, cfg, gaussian_weight_map(cfg.sigma_x, cfg.sigma_y))


def cmd_synth(cfg: PipelineConfig, out: str | None = None) -> Path:
    root = Path(out or cfg.dataset_root)
    n = write_dataset(cfg.synth, root)
    log.info("wrote %d images to %s", n, root)
    return root


def cmd_extract(cfg: PipelineConfig) -> dict:
    """Describe every dataset image, skipping records whose image and settings are unchanged."""
    catalog = storage.scan_dataset(cfg.dataset_root)
    cache = Path(cfg.output_dir) / "descriptors"
    cache.mkdir(parents=True, exist_ok=True)
    if len(catalog) == 0:
        warnings.warn(f"dataset {cfg.dataset_root} contains no images", RuntimeWarning)
        log.warning("dataset %s contains no images", cfg.dataset_root)
        return {"computed": 0, "skipped": 0}
    dhash, chash = cfg.descriptor_hash(), cfg.config_hash()
    todo = []
    skipped = 0
    for rec in catalog.records:
        target = storage.record_path(cache, rec)
        ihash = storage.file_hash(rec.path)
        header = storage.read_header(target) if target.exists() else None
        if header and header.get("image_hash") == ihash and header.get("descriptor_hash") == dhash:
            skipped += 1
            continue
        todo.append((rec, target, ihash))
    jobs = [(rec.path, cfg.descriptor) for rec, _, _ in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = pool.map(_extract_one, jobs, chunksize=4)
            for (rec, target, ihash), descs in zip(todo, results):
                storage.write_descriptor_record(target, rec, descs, ihash, dhash, chash)
    else:
        for (rec, target, ihash), job in zip(todo, jobs):
            storage.write_descriptor_record(target, rec, _extract_one(job), ihash, dhash, chash)
    log.info("extract: %d computed, %d up to date", len(todo), skipped)
    return {"computed": len(todo), "skipped": skipped}


def _trial_dir(cfg: PipelineConfig, t: int) -> Path:
    return Path(cfg.output_dir) / "trials" / f"trial_{t:03d}"


def _load_features(cfg: PipelineConfig):
    cache = Path(cfg.output_dir) / "descriptors"
    if not cache.is_dir():
        raise ConfigError(f"no descriptor cache at {cache}; run extract first")
    catalog, features = storage.load_cache(cache, cfg.descriptor_hash())
    if len(catalog) == 0:
        raise ConfigError(f"descriptor cache {cache} is empty")
    return catalog, features


def cmd_train(cfg: PipelineConfig) -> list[Path]:
    """Per trial: cross-validated fusion weights plus KCCA models retrained on all training pairs."""
    catalog, features = _load_features(cfg)
    ids = catalog.person_ids(np.arange(len(catalog)))
    image_ids = [r.image_id for r in catalog.records]
    chash = cfg.config_hash()
    written = []
    for t, split in enumerate(make_splits(catalog, cfg.protocol)):
        t0 = time.perf_counter()
        train_a, train_b = subset(features, split.train_a), subset(features, split.train_b)
        D, y, layout = build_training_profiles(train_a, train_b, cfg.kcca, ids[split.train_a],
                                               ids[split.train_b])
        fit = fit_filtered if cfg.fusion.filtering else fit_logistic
        weights = fit(D, y, cfg.fusion.C, balanced=cfg.fusion.balanced)
        bank = train_bank(train_a, train_b, cfg.kcca)

        tdir = _trial_dir(cfg, t)
        (tdir / "models").mkdir(parents=True, exist_ok=True)
        ta_ids = [image_ids[i] for i in split.train_a]
        tb_ids = [image_ids[i] for i in split.train_b]
        for (ch, kind), entry in bank.entries.items():
            storage.save_model(tdir / "models" / storage.model_filename(ch, kind), entry,
                               ta_ids, tb_ids, chash)
        storage.save_weights(tdir / "weights.json", weights, layout, chash)
        manifest = {
            "config_hash": chash, "trial": t,
            "gallery_camera": split.gallery_camera, "probe_camera": split.probe_camera,
            "train_a": ta_ids, "train_b": tb_ids,
            "gallery": [image_ids[i] for i in split.gallery],
            "probe": [image_ids[i] for i in split.probe],
        }
        (tdir / "split.json").write_text(json.dumps(manifest, indent=1) + "\n")
        log.info("trial %d: %d models, %d active weights, %.1fs", t, len(bank),
                 int(weights.active_mask.sum()), time.perf_counter() - t0)
        written.append(tdir)
    return written


def _load_bank(tdir: Path, layout: ProfileLayout, features: dict, row_of: dict, chash: str) -> ModelBank:
    entries = {}
    for ch, kind in layout.entries:
        path = tdir / "models" / storage.model_filename(ch, kind)
        if not path.exists():
            raise ConfigError(f"missing model file {path}; run train")
        model, meta = storage.load_model(path)
        if meta["config_hash"] != chash:
            raise HashMismatch(f"{path} was trained under config {meta['config_hash']}, current is {chash}")
        rows_a = [row_of[i] for i in meta["train_ids_a"]]
        rows_b = [row_of[i] for i in meta["train_ids_b"]]
        entries[(ch, kind)] = storage.rebuild_entry(model, meta, features[ch][rows_a], features[ch][rows_b])
    return ModelBank(layout, entries)


def cmd_eval(cfg: PipelineConfig) -> dict:
    catalog, features = _load_features(cfg)
    ids = catalog.person_ids(np.arange(len(catalog)))
    row_of = {r.image_id: i for i, r in enumerate(catalog.records)}
    chash = cfg.config_hash()
    out = Path(cfg.output_dir) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    timing = []
    curves, baseline, weights, layout = [], [], [], None
    for t in range(cfg.protocol.trial_count):
        t0 = time.perf_counter()
        tdir = _trial_dir(cfg, t)
        if not (tdir / "weights.json").exists():
            raise ConfigError(f"missing {tdir / 'weights.json'}; run train")
        w, layout, whash = storage.load_weights(tdir / "weights.json")
        split = json.loads((tdir / "split.json").read_text())
        if whash != chash or split["config_hash"] != chash:
            raise HashMismatch(f"{tdir} was produced under config {whash}, current is {chash}")
        bank = _load_bank(tdir, layout, features, row_of, chash)
        gallery = np.array([row_of[i] for i in split["gallery"]])
        probe = np.array([row_of[i] for i in split["probe"]])
        dist = bank.distances(subset(features, gallery), split["gallery_camera"],
                              subset(features, probe), split["probe_camera"])
        gids, pids = ids[gallery], ids[probe]
        agg = "min_over_shots" if len(set(gids)) < len(gids) else "single"
        curve = cmc_from_scores(fuse_scores(w, dist), pids, gids, agg)
        base = cmc_from_scores(raw_cosine_scores(features, gallery, probe), pids, gids, agg)
        (out / f"cmc_trial_{t:03d}.csv").write_text(cmc_csv(curve))
        curves.append(curve)
        baseline.append(base)
        weights.append(w)
        timing.append(time.perf_counter() - t0)
        log.info("trial %d: rank-1 %.4f (baseline %.4f)", t, curve.at(1), base.at(1))

    mean = average_trials(curves)
    base_mean = average_trials(baseline)
    (out / "cmc.csv").write_text(cmc_csv(mean))
    (out / "cmc_baseline.csv").write_text(cmc_csv(base_mean))
    freq = filtering_report(weights, layout)
    (out / "filter_frequency.csv").write_text(freq.to_csv())
    summary = {
        "config_hash": chash,
        "protocol": cfg.protocol.kind.value,
        "trials": len(curves),
        "gallery_size": mean.gallery_size,
        "method": "filteredLR" if cfg.fusion.filtering else "LR",
        "cmc": mean.summary(),
        "baseline_cmc": base_mean.summary(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    with open(out / "eval.log", "a") as fh:
        for t, secs in enumerate(timing):
            fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} trial {t} {secs:.3f}s\n")
    return summary


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else from_dict({})
    out = str(Path(args.out).resolve()) if args.out and args.command != "synth" else None
    if args.seed is not None or out is not None:
        cfg = cfg.with_overrides(seed=args.seed, output_dir=out)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mckcca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "render a synthetic two-camera dataset (--out: dataset root)",
        "extract": "compute the descriptor cache (--out: run directory)",
        "train": "train KCCA models and fusion weights for every trial",
        "eval": "evaluate trained trials and write CMC reports",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML or JSON configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "synth":
            cmd_synth(cfg, args.out)
        elif args.command == "extract":
            if not Path(cfg.dataset_root).is_dir():
                raise ConfigError(f"dataset_root {cfg.dataset_root} does not exist")
            cmd_extract(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        else:
            summary = cmd_eval(cfg)
            print(json.dumps(summary["cmc"], sort_keys=True))
    except (ConfigError, LayoutError, HashMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
