"""Volume-of-interest slicing, three-plane sample composition and manifests."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateVoi, EmptyClass, IndexOutOfRange

CLASS_NAMES = ("healthy", "hgg", "lgg", "alzheimer", "ms")
NUM_CLASSES = len(CLASS_NAMES)
PLANES = ("axial", "coronal", "sagittal")
# storage axis each plane holds fixed, in canonical RAS order
_PLANE_AXIS = {"axial": 2, "coronal": 1, "sagittal": 0}
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class VoiBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)) or min(self.lo) < 0:
            raise ValueError(f"invalid VOI {self.lo}..{self.hi}")

    @property
    def center(self):
        return tuple((a + b) // 2 for a, b in zip(self.lo, self.hi))

    @property
    def slices(self):
        return tuple(slice(a, b + 1) for a, b in zip(self.lo, self.hi))


@dataclass
class Sample:
    image: np.ndarray
    label: int
    source: dict = field(default_factory=dict)


def compute_voi(volume, threshold_fraction=DEFAULT_THRESHOLD):
    """Tight bounding box of voxels brighter than ``threshold_fraction * max``."""
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError(f"threshold_fraction must lie in (0, 1), got {threshold_fraction}")
    data = volume.data
    full = VoiBox((0, 0, 0), tuple(d - 1 for d in data.shape))
    peak = float(data.max())
    if not peak > 0:
        return full
    mask = data > threshold_fraction * peak
    lo, hi = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        hits = np.flatnonzero(mask.any(axis=other))
        if hits.size == 0:
            return full
        lo.append(int(hits[0]))
        hi.append(int(hits[-1]))
    return VoiBox(tuple(lo), tuple(hi))


def extract_slice(volume, plane, index):
    """2-D slice through a canonically oriented volume.

    Axial slices are indexed (x, y), coronal (x, z), sagittal (y, z).
    """
    axis = _PLANE_AXIS[plane]
    extent = volume.data.shape[axis]
    if not 0 <= index < extent:
        raise IndexOutOfRange(f"{plane} index {index} outside [0, {extent})")
    return np.take(volume.data, index, axis=axis)


def resize_bilinear(image, out):
    """Bilinear resize with half-pixel centers; works on the last two axes."""
    image = np.asarray(image)
    h_out, w_out = (int(x) for x in out)
    h_in, w_in = image.shape[-2:]
    if (h_in, w_in) == (h_out, w_out):
        return image.copy()
    src = image.astype(np.float64)

    def coords(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, wy = coords(h_in, h_out)
    x0, x1, wx = coords(w_in, w_out)
    top = src[..., y0, :]
    bottom = src[..., y1, :]
    rows = top + wy[:, None] * (bottom - top)
    left = rows[..., x0]
    right = rows[..., x1]
    result = left + wx * (right - left)
    # guard the convex-combination bound against rounding
    if image.size:
        result = np.clip(result, src.min(), src.max())
    return result.astype(image.dtype if image.dtype.kind == "f" else np.float64)


def rescale_unit(values, lo=None, hi=None):
    """Min/max rescale to [0, 1]; a constant range maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min()) if lo is None else float(lo)
    hi = float(values.max()) if hi is None else float(hi)
    if hi <= lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def compose_sample(volume, voi, out_size=(224, 224)):
    """3 x H x W image of the central axial, coronal and sagittal VOI slices."""
    if any(b < a for a, b in zip(voi.lo, voi.hi)):
        raise DegenerateVoi(f"VOI {voi} has a zero-length edge")
    sub = volume.data[voi.slices].astype(np.float64)
    cx, cy, cz = (c - a for c, a in zip(voi.center, voi.lo))
    lo, hi = sub.min(), sub.max()
    planes = (sub[:, :, cz], sub[:, cy, :], sub[cx, :, :])
    channels = [resize_bilinear(rescale_unit(p, lo, hi), out_size) for p in planes]
    return np.stack(channels).astype(np.float32)


def plane_indices(voi):
    """Volume indices (z, y, x) of the axial, coronal and sagittal slices used."""
    cx, cy, cz = voi.center
    return [int(cz), int(cy), int(cx)]


# ---------------------------------------------------------------- manifests

@dataclass
class ManifestEntry:
    path: str
    class_id: int
    class_name: str
    split: str | None = None
    source_volume: str | None = None
    plane_indices: list | None = None


@dataclass
class Manifest:
    entries: list

    def __len__(self):
        return len(self.entries)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def counts(self, split=None):
        out = {}
        for e in self.entries:
            if split is None or e.split == split:
                out[e.class_id] = out.get(e.class_id, 0) + 1
        return dict(sorted(out.items()))

    def to_jsonl(self):
        lines = [json.dumps(asdict(e), sort_keys=True) for e in self.entries]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text):
        entries = [ManifestEntry(**json.loads(line)) for line in text.splitlines() if line.strip()]
        m = cls(entries)
        m.validate()
        return m

    def validate(self):
        paths = set()
        for e in self.entries:
            if not 0 <= e.class_id < NUM_CLASSES:
                raise ValueError(f"class id {e.class_id} invalid")
            if e.split not in (None, "train", "test"):
                raise ValueError(f"split {e.split!r} invalid")
            if e.path in paths:
                raise ValueError(f"duplicate manifest path {e.path}")
            paths.add(e.path)

    def save(self, path):
        from .volume_io import atomic_write
        atomic_write(path, self.to_jsonl().encode("utf-8"))

    @classmethod
    def load(cls, path):
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def build_manifest(class_dirs, pattern="*.png", relative_to=None):
    """One unsplit entry per file, ordered by class id then file name."""
    entries = []
    for class_id in sorted(class_dirs):
        directory = Path(class_dirs[class_id])
        files = sorted(p for p in directory.glob(pattern) if p.is_file())
        if not files:
            raise EmptyClass(f"class {class_id} directory {directory} has no {pattern} files")
        for f in files:
            shown = f.relative_to(relative_to).as_posix() if relative_to else f.as_posix()
            entries.append(ManifestEntry(shown, int(class_id), CLASS_NAMES[class_id]))
    return Manifest(entries)


def class_rng(seed, *keys):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *keys])))


def split_balance(manifest, train_fraction=0.7, seed=0):
    """Undersample every class to the minority count, then split each class.

    ``floor(train_fraction * n)`` entries of each class go to train and the
    rest to test.  Output keeps the input order of the retained entries.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    by_class = {}
    for pos, e in enumerate(manifest.entries):
        by_class.setdefault(e.class_id, []).append(pos)
    if not by_class:
        raise EmptyClass("manifest is empty")
    n_keep = min(len(v) for v in by_class.values())
    n_train = math.floor(train_fraction * n_keep)
    assigned = {}
    for class_id, positions in sorted(by_class.items()):
        order = class_rng(seed, class_id).permutation(len(positions))[:n_keep]
        for rank, k in enumerate(order):
            assigned[positions[k]] = "train" if rank < n_train else "test"
    entries = [replace(e, split=assigned[pos]) for pos, e in enumerate(manifest.entries)
               if pos in assigned]
    return Manifest(entries)
