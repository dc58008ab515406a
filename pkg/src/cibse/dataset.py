"""Dataset ingestion and splitting.

Layout: `root/images/*.ppm` with matching-stem `root/labels/*.txt`. Label
lines are `class cx cy w h` with coordinates normalized to [0, 1]; class 0 is
a head with helmet, class 1 a head without. Images lacking a label file count
as having zero objects; a label file without its image is an error.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .checkpoint import _mix64, fnv1a64
from .errors import DataError
from .metrics import GroundTruth
from .ppm import read_image

CLASS_NAMES = ("helmet", "head")


def parse_label_file(path, img_w: int, img_h: int, image_id: str, nc: int = 2) -> list[GroundTruth]:
    """Denormalize one label file into pixel-space ground truths."""
    out: list[GroundTruth] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            cls = int(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        if not 0 <= cls < nc:
            raise DataError(f"{path}:{lineno}: class id {cls} outside schema 0..{nc - 1}")
        for v in (cx, cy, w, h):
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{path}:{lineno}: coordinate {v} outside [0, 1]")
        tol = 1e-6
        if cx - w / 2 < -tol or cx + w / 2 > 1 + tol or cy - h / 2 < -tol or cy + h / 2 > 1 + tol:
            raise DataError(f"{path}:{lineno}: box extends outside the image")
        x1 = max(0.0, (cx - w / 2) * img_w)
        y1 = max(0.0, (cy - h / 2) * img_h)
        x2 = min(float(img_w), (cx + w / 2) * img_w)
        y2 = min(float(img_h), (cy + h / 2) * img_h)
        out.append(GroundTruth(cls, (x1, y1, x2, y2), image_id))
    return out


def load_dataset(root, nc: int = 2) -> list[tuple[Path, list[GroundTruth]]]:
    """All (image path, ground truths) pairs under a dataset root, sorted by stem."""
    root = Path(root)
    images_dir, labels_dir = root / "images", root / "labels"
    if not images_dir.is_dir():
        raise DataError(f"{root}: missing images/ directory")
    images = {p.stem: p for p in sorted(images_dir.glob("*.ppm"))}
    if labels_dir.is_dir():
        for lp in labels_dir.glob("*.txt"):
            if lp.stem not in images:
                raise DataError(f"{lp}: label file has no matching image")
    out = []
    for stem in sorted(images):
        img_path = images[stem]
        h, w = read_image(img_path).shape[:2]
        label_path = labels_dir / f"{stem}.txt"
        gts = parse_label_file(label_path, w, h, stem, nc) if label_path.is_file() else []
        out.append((img_path, gts))
    return out


def split_dataset(
    stems: list[str], ratios: tuple[float, float, float] = (0.7, 0.2, 0.1), seed: int = 0
) -> tuple[list[str], list[str], list[str]]:
    """Deterministic train/val/test split by seeded hash of each stem.

    Sizes are floor(r0*n) / floor(r1*n) / remainder; partitions are disjoint
    and exhaustive, and the same seed always reproduces the same split.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios {ratios} do not sum to 1")
    with np.errstate(over="ignore"):
        seed_key = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(0x9E3779B97F4A7C15))
        keys = {stem: int(_mix64(np.uint64(fnv1a64(stem)) ^ seed_key)) for stem in stems}
    ordered = sorted(stems, key=lambda s: (keys[s], s))
    n = len(ordered)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]
