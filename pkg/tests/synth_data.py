"""Procedural image and dataset generators shared by the test suite."""

import numpy as np

from defectnet.data import LabeledDataset, RasterImage, encode_ppm
from defectnet.labels import LABEL_NAMES


def from_float(a) -> RasterImage:
    """HxWx3 float array in [0,1] -> 8-bit RasterImage."""
    q = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return RasterImage(a.shape[1], a.shape[0], np.ascontiguousarray(q).tobytes())


def solid_image(size: int, rgb) -> RasterImage:
    a = np.ones((size, size, 3)) * (np.asarray(rgb, dtype=np.float64) / 255.0)
    return from_float(a)


def texture_image(cls: int, size: int, rng: np.random.Generator,
                  gains=(1.0, 1.0, 1.0), amplitude=0.35, noise=0.05) -> RasterImage:
    """Four luminance-pattern classes; per-channel gains shift the palette.

    0: horizontal stripes, 1: vertical stripes, 2: checkerboard, 3: flat.
    Class identity lives in the spatial pattern, so a gain change (the
    'color-shifted domain') keeps labels meaningful. amplitude sets the
    pattern contrast, noise the per-pixel clutter.
    """
    period = 8
    phase = rng.integers(0, period)
    ys, xs = np.indices((size, size))
    if cls == 0:
        mask = ((ys + phase) // (period // 2)) % 2
    elif cls == 1:
        mask = ((xs + phase) // (period // 2)) % 2
    elif cls == 2:
        mask = (((ys + phase) // period) + ((xs + phase) // period)) % 2
    elif cls == 3:
        mask = np.full((size, size), 0.5)
    else:
        raise ValueError(f"texture class {cls} out of range")
    lum = 0.5 + amplitude * (2.0 * mask - 1.0) + rng.uniform(-noise, noise, (size, size))
    img = lum[:, :, None] * np.asarray(gains)[None, None, :]
    return from_float(img)


def texture_dataset(n_per_class: int, size: int, seed: int,
                    gains=(1.0, 1.0, 1.0), amplitude=0.35, noise=0.05) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    items = []
    for cls in range(4):
        for _ in range(n_per_class):
            items.append((texture_image(cls, size, rng, gains, amplitude, noise), cls))
    return LabeledDataset(items=items)


def solid_color_dataset(n_per_class: int, size: int) -> LabeledDataset:
    """Two-class dataset of exact solid colors (red-ish vs blue-ish)."""
    items = []
    for _ in range(n_per_class):
        items.append((solid_image(size, (220, 40, 40)), 0))
        items.append((solid_image(size, (40, 40, 220)), 1))
    return LabeledDataset(items=items)


def noise_dataset(n_per_class: int, size: int, seed: int) -> LabeledDataset:
    """Uniform-noise images with arbitrary labels; for exercising optimizers."""
    rng = np.random.default_rng(seed)
    items = []
    for cls in range(4):
        for _ in range(n_per_class):
            items.append((from_float(rng.uniform(0.1, 0.9, (size, size, 3))), cls))
    return LabeledDataset(items=items)


def patch_image(size: int, patch: int, top: int, left: int,
                rng: np.random.Generator) -> RasterImage:
    """Dim noisy background with one bright patch at (top, left)."""
    a = rng.uniform(0.0, 0.2, (size, size, 3))
    a[top : top + patch, left : left + patch, :] = rng.uniform(0.8, 1.0, (patch, patch, 3))
    return from_float(a)


def write_tree(root, per_label: dict) -> None:
    """Write a <root>/<label>/*.ppm tree; labels absent from the dict get empty dirs."""
    for name in LABEL_NAMES:
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(per_label.get(name, [])):
            (d / f"img{i:03d}.ppm").write_bytes(encode_ppm(img))
