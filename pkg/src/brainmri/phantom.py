"""Synthetic five-class brain phantoms for desk-scale runs.

Every phantom is a smooth ellipsoidal "brain" with a dark central ventricle.
Class geometry on top of that:

0 healthy    nothing else
1 hgg        one large bright blob, radius 15-25 % of the extent
2 lgg        one small blob, radius 5-10 %, at 60 % of the class-1 contrast
3 alzheimer  ventricle radius doubled
4 ms         5-9 small bright speckles

Lesions are placed so they cross the central slices a sample is built
from.  Gaussian noise (sigma = 5 % of the nominal dynamic range) is added
inside the head only, so the background stays exactly zero.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .augment import sample_rng
from .dataset import CLASS_NAMES
from .volume_io import Volume, save_volume

BRAIN_LEVEL = 600.0
LESION_GAIN = 400.0
DYNAMIC_RANGE = BRAIN_LEVEL + LESION_GAIN
NOISE_SIGMA = 0.05 * DYNAMIC_RANGE
VENTRICLE_FRACTION = 0.08


def _soft_ball(dist, radius, width=0.6):
    """~1 inside ``radius``, ~0 outside, with a logistic edge ``width`` voxels wide."""
    return 1.0 / (1.0 + np.exp(np.clip((dist - radius) / width, -50, 50)))


def generate_phantom(class_id, index, dims=64, seed=0):
    """Return ``(volume, info)``; fully determined by ``(seed, class_id, index)``."""
    if class_id not in range(len(CLASS_NAMES)):
        raise ValueError(f"class_id must be 0..4, got {class_id}")
    shape = (dims,) * 3 if np.isscalar(dims) else tuple(int(d) for d in dims)
    if min(shape) < 32:
        raise ValueError(f"phantom dims must be at least 32, got {shape}")
    rng = sample_rng(seed, class_id, index)
    n = np.array(shape, dtype=np.float64)
    extent = float(n.min())
    grid = np.indices(shape, dtype=np.float64)

    center = (n - 1) / 2 + rng.uniform(-2, 2, 3)
    axes = n * rng.uniform(0.34, 0.40, 3)
    rel = (grid - center[:, None, None, None]) / axes[:, None, None, None]
    r = np.sqrt(np.sum(rel ** 2, axis=0))
    head = 1.0 / (1.0 + np.exp(np.clip((r - 1.0) / 0.03, -50, 50)))
    image = BRAIN_LEVEL * (1.0 - 0.15 * r ** 2) * head

    dist_c = np.sqrt(np.sum((grid - center[:, None, None, None]) ** 2, axis=0))
    v_radius = VENTRICLE_FRACTION * extent * (2.0 if class_id == 3 else 1.0)
    image *= 1.0 - 0.7 * _soft_ball(dist_c, v_radius)

    lesions = []

    def add_blob(pos, radius, gain):
        d = np.sqrt(np.sum((grid - np.asarray(pos)[:, None, None, None]) ** 2, axis=0))
        image[...] += gain * _soft_ball(d, radius) * head
        lesions.append({"center": [float(c) for c in pos], "radius": float(radius), "gain": float(gain)})

    side = rng.choice([-1.0, 1.0])
    if class_id == 1:
        radius = rng.uniform(0.15, 0.25) * extent
        offset = [side * rng.uniform(0.12, 0.18) * n[0], rng.uniform(-1, 1), rng.uniform(-1, 1)]
        add_blob(center + offset, radius, LESION_GAIN)
    elif class_id == 2:
        radius = rng.uniform(0.05, 0.10) * extent
        offset = [side * rng.uniform(0.15, 0.20) * n[0], rng.uniform(-1, 1), rng.uniform(-1, 1)]
        add_blob(center + offset, radius, 0.6 * LESION_GAIN)
    elif class_id == 4:
        count = int(rng.integers(5, 10))
        for k in range(count):
            fixed = k % 3  # each speckle sits on one central plane
            direction = rng.normal(size=3)
            direction[fixed] = 0.0
            direction /= np.linalg.norm(direction)
            pos = center + direction * axes * rng.uniform(0.4, 0.75)
            pos[fixed] = np.floor(center[fixed] + 0.5)
            add_blob(pos, rng.uniform(0.025, 0.04) * extent, LESION_GAIN)

    inside = head > 0.05
    image[inside] += rng.normal(0.0, NOISE_SIGMA, size=int(inside.sum()))
    data = np.clip(np.rint(image), 0, np.iinfo(np.int16).max).astype(np.int16)
    info = {
        "class_id": class_id,
        "center": [float(c) for c in center],
        "semi_axes": [float(a) for a in axes],
        "ventricle_radius": float(v_radius),
        "lesions": lesions,
    }
    return Volume(data), info


def write_phantom_corpus(out_dir, per_class=10, dims=64, seed=0):
    """Write ``<out>/<id>_<name>/phantom_<k>.nii`` for every class; returns the paths."""
    out_dir = Path(out_dir)
    paths = []
    for class_id, name in enumerate(CLASS_NAMES):
        for k in range(per_class):
            volume, _ = generate_phantom(class_id, k, dims, seed)
            path = out_dir / f"{class_id}_{name}" / f"phantom_{k:03d}.nii"
            paths.extend(save_volume(volume, path))
    return paths
