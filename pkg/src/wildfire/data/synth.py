"""Deterministic synthetic imagery: the fire/non-fire corpus and source textures.

Fire images place bright warm-hue elliptical blobs with per-pixel flicker
texture over landscape backgrounds. Non-fire images reuse the same
backgrounds with vegetation, optional sky bands, and — deliberately — muted
orange-foliage distractors, so a classifier cannot get away with "any warm
pixel means fire". A separate 4-class texture task (warm blobs, foliage,
sky, stripes) serves as the pretraining source for transfer experiments.

Everything is a pure function of the seed: per-image generators are spawned
from (seed, split, class, index), so corpora are bit-identical across runs.
"""

from pathlib import Path

import numpy as np

from .. import tensor as T
from ..errors import ValidationError
from .dataset import LABELS, SPLITS, DatasetManifest, load_manifest
from .images import write_png

SOURCE_CLASSES = ("warm_blobs", "foliage", "sky", "stripes")


def _grids(h: int, w: int):
    return np.meshgrid(np.arange(h, dtype=np.float64),
                       np.arange(w, dtype=np.float64), indexing="ij")


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    top = np.array([rng.uniform(0.10, 0.40), rng.uniform(0.20, 0.50), rng.uniform(0.10, 0.45)])
    bottom = np.array([rng.uniform(0.05, 0.30), rng.uniform(0.15, 0.40), rng.uniform(0.05, 0.25)])
    t = np.linspace(0.0, 1.0, h)[None, :, None]
    img = np.empty((3, h, w))
    img[:] = top[:, None, None] * (1 - t) + bottom[:, None, None] * t
    ys, xs = _grids(h, w)
    for _ in range(3):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.3, 0.8) * h, rng.uniform(0.3, 0.8) * w
        bump = np.exp(-(((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2))
        img += rng.uniform(-0.05, 0.05) * bump[None]
    return img


def _blob_mask(rng: np.random.Generator, h: int, w: int,
               y_range=(0.25, 0.9), r_range=(0.12, 0.30)) -> np.ndarray:
    ys, xs = _grids(h, w)
    cy = rng.uniform(*y_range) * h
    cx = rng.uniform(0.15, 0.85) * w
    ry = rng.uniform(*r_range) * h
    rx = rng.uniform(*r_range) * w
    return np.exp(-(((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2))


def _fire_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    img = _background(rng, h, w)
    for _ in range(int(rng.integers(1, 4))):
        mask = _blob_mask(rng, h, w)
        flicker = 1.0 + rng.uniform(-0.45, 0.45, size=(h, w))
        color = np.array([rng.uniform(0.95, 1.0), rng.uniform(0.45, 0.80),
                          rng.uniform(0.00, 0.15)])
        layer = np.clip(color[:, None, None] * flicker[None], 0.0, 1.0)
        img = img + (layer - img) * mask[None]
    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(T.DTYPE)


def _nonfire_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    img = _background(rng, h, w)
    for _ in range(int(rng.integers(2, 5))):
        mask = _blob_mask(rng, h, w)
        color = np.array([rng.uniform(0.05, 0.30), rng.uniform(0.25, 0.60),
                          rng.uniform(0.05, 0.25)])
        img = img + (color[:, None, None] - img) * mask[None]
    if rng.random() < 0.35:
        horizon = rng.uniform(0.2, 0.5) * h
        softness = max(1.0, 0.08 * h)
        band = 1.0 / (1.0 + np.exp((np.arange(h) - horizon) / softness))
        color = np.array([rng.uniform(0.40, 0.65), rng.uniform(0.45, 0.70),
                          rng.uniform(0.50, 0.80)])
        img = img + (color[:, None, None] - img) * band[None, :, None]
    if rng.random() < 0.75:
        # Sunset/autumn distractor: fire-colored but smooth — separating it
        # from real fire takes the flicker texture, not the color average.
        mask = _blob_mask(rng, h, w, r_range=(0.10, 0.26))
        color = np.array([rng.uniform(0.55, 0.80), rng.uniform(0.30, 0.55),
                          rng.uniform(0.05, 0.20)])
        img = img + (color[:, None, None] - img) * mask[None]
    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(T.DTYPE)


def generate_image(label: str, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """One synthetic image for label 'fire' or 'non_fire'."""
    if label == "fire":
        return _fire_image(rng, h, w)
    if label == "non_fire":
        return _nonfire_image(rng, h, w)
    raise ValidationError(f"unknown label {label!r}")


def generate_source_image(cls: str, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """One image for the 4-class pretraining texture task."""
    if cls == "warm_blobs":
        # Flickering warm blobs; with the sometimes-warm smooth sky class this
        # forces the 4-way discriminator to learn texture, not just hue.
        img = _background(rng, h, w)
        for _ in range(int(rng.integers(1, 4))):
            mask = _blob_mask(rng, h, w)
            flicker = 1.0 + rng.uniform(-0.45, 0.45, size=(h, w))
            color = np.array([rng.uniform(0.85, 1.0), rng.uniform(0.40, 0.80),
                              rng.uniform(0.00, 0.20)])
            layer = np.clip(color[:, None, None] * flicker[None], 0.0, 1.0)
            img = img + (layer - img) * mask[None]
    elif cls == "foliage":
        img = _background(rng, h, w)
        for _ in range(int(rng.integers(3, 6))):
            mask = _blob_mask(rng, h, w, y_range=(0.1, 0.9))
            color = np.array([rng.uniform(0.05, 0.30), rng.uniform(0.30, 0.65),
                              rng.uniform(0.05, 0.25)])
            img = img + (color[:, None, None] - img) * mask[None]
    elif cls == "sky":
        if rng.random() < 0.5:
            # Sunset palette: warm like the blobs but perfectly smooth.
            top = np.array([rng.uniform(0.55, 0.85), rng.uniform(0.35, 0.55),
                            rng.uniform(0.25, 0.45)])
            bottom = np.array([rng.uniform(0.75, 0.95), rng.uniform(0.45, 0.65),
                               rng.uniform(0.20, 0.40)])
        else:
            top = np.array([rng.uniform(0.35, 0.60), rng.uniform(0.45, 0.70),
                            rng.uniform(0.60, 0.90)])
            bottom = np.array([rng.uniform(0.55, 0.80), rng.uniform(0.60, 0.85),
                               rng.uniform(0.70, 0.95)])
        t = np.linspace(0.0, 1.0, h)[None, :, None]
        img = np.empty((3, h, w))
        img[:] = top[:, None, None] * (1 - t) + bottom[:, None, None] * t
        for _ in range(int(rng.integers(0, 3))):
            mask = _blob_mask(rng, h, w, y_range=(0.05, 0.6), r_range=(0.10, 0.25))
            white = np.array([0.95, 0.95, 0.97])
            img = img + (white[:, None, None] - img) * (0.7 * mask)[None]
    elif cls == "stripes":
        ys, xs = _grids(h, w)
        phi = rng.uniform(0.0, np.pi)
        freq = rng.uniform(0.15, 0.6)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = 0.5 + 0.5 * np.sin(freq * (np.cos(phi) * xs + np.sin(phi) * ys) + phase)
        c1 = rng.uniform(0.1, 0.9, size=3)
        c2 = rng.uniform(0.1, 0.9, size=3)
        img = c1[:, None, None] * wave[None] + c2[:, None, None] * (1 - wave[None])
    else:
        raise ValidationError(f"unknown source class {cls!r}")
    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(T.DTYPE)


def _image_rng(seed: int, split_idx: int, label_idx: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(split_idx, label_idx, index))
    )


def synth_dataset(
    out_dir,
    n_per_class: int,
    image_size: tuple[int, int] = (64, 48),
    seed: int = 0,
    val_per_class: int | None = None,
    test_per_class: int | None = None,
) -> DatasetManifest:
    """Materialize a PNG corpus under `out_dir` and return its manifest.

    The train split holds exactly `n_per_class` images per class; val and
    test default to max(8, n_per_class // 4) per class.
    """
    if n_per_class < 1:
        raise ValidationError(f"n_per_class must be >= 1, got {n_per_class}")
    h, w = image_size
    if h < 1 or w < 1:
        raise ValidationError(f"image_size must be >= 1x1, got {image_size}")
    if val_per_class is None:
        val_per_class = max(8, n_per_class // 4)
    if test_per_class is None:
        test_per_class = max(8, n_per_class // 4)
    sizes = {"train": n_per_class, "val": val_per_class, "test": test_per_class}
    out_dir = Path(out_dir)
    for split_idx, split in enumerate(SPLITS):
        for label_idx, label in enumerate(LABELS):
            class_dir = out_dir / split / label
            class_dir.mkdir(parents=True, exist_ok=True)
            for i in range(sizes[split]):
                rng = _image_rng(seed, split_idx, label_idx, i)
                img = generate_image(label, rng, h, w)
                write_png(class_dir / f"{i:05d}.png", img)
    return load_manifest(out_dir)
