"""Volume directory -> PNG samples + balanced train/test manifest."""

from __future__ import annotations

import logging
import re
from pathlib import Path

from .dataset import (
    CLASS_NAMES,
    DEFAULT_THRESHOLD,
    Manifest,
    build_manifest,
    compose_sample,
    compute_voi,
    plane_indices,
    split_balance,
)
from .errors import BrainMRIError, EmptyClass
from .volume_io import atomic_write, export_png, is_volume_path, load_volume, reorient_canonical

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


def class_id_for_dir(name):
    """``"3"``, ``"3_alzheimer"`` or ``"alzheimer"`` -> 3; None if unrecognized."""
    m = re.match(r"^(\d+)", name)
    if m and int(m.group(1)) < len(CLASS_NAMES):
        return int(m.group(1))
    lowered = name.lower()
    return CLASS_NAMES.index(lowered) if lowered in CLASS_NAMES else None


def volume_to_sample(volume, size, threshold_fraction=DEFAULT_THRESHOLD):
    """Reorient, find the VOI and compose the 3 x size x size image."""
    volume = reorient_canonical(volume)
    voi = compute_voi(volume, threshold_fraction)
    return compose_sample(volume, voi, (size, size)), voi


def _stem(path):
    name = path.name
    for ext in (".nii.gz", ".nii", ".hdr", ".mha", ".nhdr", ".nrrd"):
        if name.lower().endswith(ext):
            return name[: -len(ext)]
    return path.stem


def prepare_dataset(input_dir, out_dir, size=224, train_fraction=0.7, seed=0,
                    threshold_fraction=DEFAULT_THRESHOLD):
    """Convert every volume under ``input_dir/<class dir>/`` and write the manifest.

    Unreadable volumes are logged and skipped; a class whose volumes all
    fail raises ``EmptyClass``.  Returns the written manifest.
    """
    input_dir, out_dir = Path(input_dir), Path(out_dir)
    class_dirs, provenance = {}, {}
    for sub in sorted(p for p in input_dir.iterdir() if p.is_dir()):
        class_id = class_id_for_dir(sub.name)
        if class_id is None:
            logger.warning("skipping directory %s: no class id in its name", sub)
            continue
        target = out_dir / f"{class_id}_{CLASS_NAMES[class_id]}"
        written = 0
        for path in sorted(p for p in sub.iterdir() if p.is_file() and is_volume_path(p)):
            try:
                image, voi = volume_to_sample(load_volume(path), size, threshold_fraction)
                png = target / f"{_stem(path)}.png"
                atomic_write(png, export_png(image.transpose(1, 2, 0)))
            except (BrainMRIError, OSError, ValueError) as exc:
                logger.warning("skipping %s: %s", path, exc)
                continue
            written += 1
            provenance[png.relative_to(out_dir).as_posix()] = (
                path.relative_to(input_dir).as_posix(), plane_indices(voi))
        if written == 0:
            raise EmptyClass(f"no readable volumes for class {class_id} in {sub}")
        class_dirs[class_id] = target
    if not class_dirs:
        raise EmptyClass(f"no class directories under {input_dir}")
    manifest = build_manifest(class_dirs, relative_to=out_dir)
    # files left over from earlier runs have no provenance here
    manifest.entries = [e for e in manifest.entries if e.path in provenance]
    for e in manifest.entries:
        e.source_volume, e.plane_indices = provenance[e.path]
    manifest = split_balance(manifest, train_fraction, seed)
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest


__all__ = ["MANIFEST_NAME", "Manifest", "class_id_for_dir", "prepare_dataset", "volume_to_sample"]
