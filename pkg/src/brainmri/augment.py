"""Seeded crop, scale and mirror augmentation.

Random streams are numpy ``PCG64`` generators seeded through
``SeedSequence([seed, *keys])``, so a sample's stream depends only on its
keys (e.g. iteration and batch slot) and never on processing order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import Sample, resize_bilinear
from .errors import CropTooLarge


def sample_rng(seed, *keys):
    """Independent PCG64 stream for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def _round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class AugmentConfig:
    crop_size: tuple = (224, 224)
    base_size: int = 256
    scale_range: tuple = (1.0, 1.25)
    mirror_h_prob: float = 0.5
    mirror_v_prob: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        for p in (self.mirror_h_prob, self.mirror_v_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"mirror probability {p} outside [0, 1]")
        if min(self.crop_size) > _round_half_up(lo * self.base_size):
            raise ValueError(f"crop {self.crop_size} exceeds the smallest scaled side "
                             f"{_round_half_up(lo * self.base_size)}")

    @classmethod
    def for_input(cls, size, **overrides):
        """Config whose crop and (by default) base side equal the network input side."""
        overrides.setdefault("base_size", size)
        return cls(crop_size=(size, size), **overrides)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("crop_size", "scale_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def mirror(image, axis):
    """Horizontal reverses columns, vertical reverses rows (last two axes)."""
    if axis == "horizontal":
        return np.ascontiguousarray(image[..., ::-1])
    if axis == "vertical":
        return np.ascontiguousarray(image[..., ::-1, :])
    raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


def scale_jitter(image, rng, scale_range, target_short):
    """Resize so the shorter side is ``round(s * target_short)``, s ~ U[lo, hi]."""
    lo, hi = scale_range
    s = rng.uniform(lo, hi)
    h, w = image.shape[-2:]
    short = max(1, _round_half_up(s * target_short))
    if h <= w:
        out = (short, max(1, _round_half_up(short * w / h)))
    else:
        out = (max(1, _round_half_up(short * h / w)), short)
    return resize_bilinear(image, out)


def random_crop(image, rng, out):
    h, w = image.shape[-2:]
    ch, cw = out
    if ch > h or cw > w:
        raise CropTooLarge(f"crop {out} larger than image {(h, w)}")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return image[..., top:top + ch, left:left + cw].copy()


def center_crop(image, out):
    h, w = image.shape[-2:]
    ch, cw = out
    if ch > h or cw > w:
        raise CropTooLarge(f"crop {out} larger than image {(h, w)}")
    top, left = (h - ch) // 2, (w - cw) // 2
    return image[..., top:top + ch, left:left + cw].copy()


def augment_image(image, cfg, rng):
    if not cfg.enabled:
        return center_crop(image, cfg.crop_size)
    out = scale_jitter(image, rng, cfg.scale_range, cfg.base_size)
    out = random_crop(out, rng, cfg.crop_size)
    if rng.random() < cfg.mirror_h_prob:
        out = mirror(out, "horizontal")
    if rng.random() < cfg.mirror_v_prob:
        out = mirror(out, "vertical")
    return out


def augment_sample(sample, cfg, rng):
    """scale -> crop -> horizontal mirror -> vertical mirror; label kept."""
    return replace(sample, image=augment_image(sample.image, cfg, rng))


__all__ = [
    "AugmentConfig", "Sample", "augment_image", "augment_sample", "center_crop",
    "mirror", "random_crop", "sample_rng", "scale_jitter",
]
