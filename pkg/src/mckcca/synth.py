"""Synthetic two-camera person datasets for dataset-free experiments.

Each identity is a cartoon pedestrian: skin-toned head, a shirt with an
identity-specific colour and stripe pattern, trousers and shoes. Camera b
sees every image through a per-channel affine colour transform. The noise
level scales every nuisance at once: pixel noise, background clutter,
positional jitter and body-width changes.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SHAPE = (128, 48)


@dataclass(frozen=True)
class SyntheticSpec:
    identity_count: int = 100
    shots: int = 1
    gain_b: tuple[float, float, float] = (0.75, 1.0, 1.3)
    offset_b: tuple[float, float, float] = (25.0, 0.0, -20.0)
    gain_a: tuple[float, float, float] = (1.0, 1.0, 1.0)
    offset_a: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise: float = 0.6
    seed: int = 0
    distractors_b: int = 0
    distractors_a: int = 0

    def __post_init__(self):
        if self.identity_count < 4:
            raise ValueError("identity_count must be >= 4")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _rgb(h, s, v):
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v)) * 255


@dataclass(frozen=True)
class Appearance:
    skin: np.ndarray
    hair: np.ndarray
    shirt: np.ndarray
    stripe: np.ndarray
    stripe_period: int
    stripe_width: int
    trousers: np.ndarray
    shoes: np.ndarray
    torso_end: float
    width: float


def random_appearance(rng: np.random.Generator) -> Appearance:
    return Appearance(
        skin=_rgb(rng.uniform(0.02, 0.1), rng.uniform(0.3, 0.6), rng.uniform(0.5, 0.95)),
        hair=_rgb(rng.uniform(0, 0.15), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.5)),
        shirt=_rgb(rng.uniform(), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)),
        stripe=_rgb(rng.uniform(), rng.uniform(0.0, 1.0), rng.uniform(0.1, 1.0)),
        stripe_period=int(rng.integers(4, 14)),
        stripe_width=int(rng.integers(0, 4)),
        trousers=_rgb(rng.uniform(), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.8)),
        shoes=_rgb(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.05, 0.4)),
        torso_end=rng.uniform(0.5, 0.62),
        width=rng.uniform(0.38, 0.5),
    )


def render(app: Appearance, rng: np.random.Generator, noise: float,
           shape: tuple[int, int] = IMAGE_SHAPE) -> np.ndarray:
    """Draw one view of a person as float RGB in [0, 255]."""
    h, w = shape
    bg = np.full(3, 128.0) * (1 - noise) + rng.uniform(40, 220, 3) * noise
    img = np.broadcast_to(bg, (h, w, 3)).copy()
    if noise > 0:
        # low-frequency clutter
        blobs = rng.uniform(-60, 60, (4, 2, 3)) * noise
        img += np.kron(blobs, np.ones((h // 4 + 1, w // 2 + 1, 1)))[:h, :w]

    jitter = 3 * noise
    dy, dx = rng.uniform(-jitter, jitter, 2)
    width = app.width * (1 + rng.uniform(-0.15, 0.15) * noise)
    ys = (np.arange(h) - dy)[:, None] / h
    xs = np.abs((np.arange(w) - dx) - (w - 1) / 2)[None, :] / w

    head = (xs / 0.13) ** 2 + ((ys - 0.09) / 0.075) ** 2 <= 1
    hair = head & (ys < 0.06)
    body_w = width / 2
    torso = (ys >= 0.17) & (ys < app.torso_end) & (xs <= body_w)
    legs = (ys >= app.torso_end) & (ys < 0.93) & (xs <= body_w * 0.85) & (xs >= 0.03)
    shoes = (ys >= 0.93) & (ys < 0.99) & (xs <= body_w * 0.9) & (xs >= 0.02)

    rows = np.round(np.arange(h) - dy).astype(int)[:, None]
    stripes = torso & (app.stripe_width > 0) & ((rows % app.stripe_period) < app.stripe_width)

    img[np.broadcast_to(head, (h, w))] = app.skin
    img[np.broadcast_to(hair, (h, w))] = app.hair
    img[np.broadcast_to(torso, (h, w))] = app.shirt
    img[np.broadcast_to(stripes, (h, w))] = app.stripe
    img[np.broadcast_to(legs, (h, w))] = app.trousers
    img[np.broadcast_to(shoes, (h, w))] = app.shoes
    if noise > 0:
        img += rng.normal(0, 25 * noise, img.shape)
    return np.clip(img, 0, 255)


def camera_transform(img: np.ndarray, gain, offset) -> np.ndarray:
    return np.clip(img * np.asarray(gain) + np.asarray(offset), 0, 255)


def generate(spec: SyntheticSpec):
    """Yield ``(camera, person_id, shot, uint8 image)`` in a fixed order."""
    rng = np.random.default_rng(spec.seed)
    people = [("a", "b", f"{i:04d}") for i in range(spec.identity_count)]
    people += [("a", None, f"{spec.identity_count + i:04d}") for i in range(spec.distractors_a)]
    people += [(None, "b", f"{spec.identity_count + spec.distractors_a + i:04d}")
               for i in range(spec.distractors_b)]
    transforms = {"a": (spec.gain_a, spec.offset_a), "b": (spec.gain_b, spec.offset_b)}
    for cam_a, cam_b, pid in people:
        app = random_appearance(rng)
        for cam in (cam_a, cam_b):
            if cam is None:
                continue
            for shot in range(spec.shots):
                img = camera_transform(render(app, rng, spec.noise), *transforms[cam])
                yield cam, pid, shot, np.rint(img).astype(np.uint8)


def write_dataset(spec: SyntheticSpec, root) -> int:
    """Write ``<root>/cam_a/<pid>_<shot>.png`` and ``cam_b``; returns the image count."""
    root = Path(root)
    for cam in "ab":
        (root / f"cam_{cam}").mkdir(parents=True, exist_ok=True)
    count = 0
    for cam, pid, shot, img in generate(spec):
        Image.fromarray(img).save(root / f"cam_{cam}" / f"{pid}_{shot}.png", optimize=False)
        count += 1
    return count
