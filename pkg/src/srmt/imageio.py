"""PNG decoding and encoding for engine images.

An engine image is a float32 array of shape (C, H, W) with values in
[0, 1]. 8-bit PNG intensities map to v / 255 on read and round(v * 255)
with clamping on write. Grayscale files become one channel, color files
three; palette and alpha variants are flattened to those two cases.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ShapeMismatch

DTYPE = np.float32


def load_png(path) -> np.ndarray:
    """Read a PNG into a (C, H, W) float32 array in [0, 1]."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "1", "I;16", "I"):
                im = im.convert("L")
            elif im.mode != "RGB":
                im = im.convert("RGB")
            raw = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if raw.ndim == 2:
        raw = raw[None, :, :]
    else:
        raw = raw.transpose(2, 0, 1)
    return np.ascontiguousarray(raw, dtype=DTYPE) / DTYPE(255)


def save_png(image: np.ndarray, path) -> None:
    """Write a (C, H, W) float32 image in [0, 1] to an 8-bit PNG."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeMismatch(f"expected a (1|3, H, W) image, got {arr.shape}")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if quantized.shape[0] == 1:
        im = Image.fromarray(quantized[0], mode="L")
    else:
        im = Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = str(path) + ".tmp"
    im.save(tmp, format="PNG")
    os.replace(tmp, path)
