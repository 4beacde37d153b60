"""Seed-image loading and the correctly-classified filter.

A seed set is a CSV manifest of (filename, class_index) rows next to the
image files, or a directory containing a manifest.csv. Only seeds the
model classifies correctly enter a campaign; every dropped file is
reported with the reason (bad decode, wrong shape, or the predicted
class that disagreed with the label).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio, nn
from .errors import DecodeError, EmptySeedSet

BATCH = 256


@dataclass(frozen=True)
class SeedImage:
    """One accepted seed: pixels in [0,1], label verified against the model."""
    id: str
    pixels: np.ndarray
    true_class: int


@dataclass(frozen=True)
class SeedExclusion:
    id: str
    reason: str
    true_class: int | None = None
    predicted_class: int | None = None


def _manifest_path(dir_or_manifest) -> Path:
    path = Path(dir_or_manifest)
    if path.is_dir():
        path = path / "manifest.csv"
    return path


def read_manifest(dir_or_manifest) -> list[tuple[Path, str, int]]:
    """(file path, seed id, labeled class) per row; header row optional."""
    path = _manifest_path(dir_or_manifest)
    if not path.is_file():
        raise EmptySeedSet(f"no manifest at {path}")
    rows: list[tuple[Path, str, int]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DecodeError(f"{path}:{lineno}: expected filename,class_index")
            name, label = row[0].strip(), row[1].strip()
            if lineno == 1 and not label.lstrip("+-").isdigit():
                continue                      # header row
            try:
                cls = int(label)
            except ValueError as exc:
                raise DecodeError(f"{path}:{lineno}: class index {label!r}") from exc
            rows.append((path.parent / name, Path(name).stem, cls))
    return rows


def load_seed_set(dir_or_manifest, model, *,
                  log=None) -> tuple[list[SeedImage], list[SeedExclusion]]:
    """Seeds the model classifies correctly, plus the audit of drops."""
    rows = read_manifest(dir_or_manifest)
    if not rows:
        raise EmptySeedSet(f"manifest {_manifest_path(dir_or_manifest)} lists no images")

    loaded: list[tuple[str, int, np.ndarray]] = []
    excluded: list[SeedExclusion] = []
    for file_path, seed_id, cls in rows:
        try:
            pixels = imageio.load_png(file_path)
        except DecodeError as exc:
            excluded.append(SeedExclusion(seed_id, f"decode failed: {exc}", cls))
            continue
        if pixels.shape != tuple(model.input_shape):
            excluded.append(SeedExclusion(
                seed_id, f"shape {pixels.shape} != model input {tuple(model.input_shape)}", cls))
            continue
        if not 0 <= cls < model.num_classes:
            excluded.append(SeedExclusion(
                seed_id, f"label {cls} outside [0, {model.num_classes})", cls))
            continue
        loaded.append((seed_id, cls, pixels))

    seeds: list[SeedImage] = []
    for start in range(0, len(loaded), BATCH):
        chunk = loaded[start:start + BATCH]
        logits = nn.forward_batch(model, np.stack([p for _, _, p in chunk]))
        predicted = np.argmax(logits, axis=1)
        for (seed_id, cls, pixels), pred in zip(chunk, predicted):
            if int(pred) == cls:
                seeds.append(SeedImage(seed_id, pixels, cls))
            else:
                excluded.append(SeedExclusion(
                    seed_id, "misclassified", true_class=cls, predicted_class=int(pred)))

    if log is not None:
        for exc in excluded:
            log(f"seed {exc.id} excluded: {exc.reason}"
                + (f" (predicted {exc.predicted_class})" if exc.predicted_class is not None else ""))
    if not seeds:
        raise EmptySeedSet(f"no usable seeds among {len(rows)} manifest entries")
    return seeds, excluded
