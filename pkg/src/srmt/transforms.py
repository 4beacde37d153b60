"""Region-scoped image transforms.

Each transform rewrites the pixels inside one rectangle and leaves the
rest of the image untouched. Images are float32 (C, H, W) in [0, 1] and
the input is never mutated.

    invert          v -> 1 - v
    hole            v -> 0
    brightness      v -> clamp(v * factor)
    blur            Gaussian smoothing confined to the rectangle; samples
                    outside it are edge-clamped to the rectangle border,
                    so no pixel outside the region is ever read
    gaussian_noise  v -> clamp(v + n), n drawn per value from N(0, sigma)

Parameter defaults (brightness factor 1.5, blur sigma 2 with a 5x5
kernel, noise sigma 0.1) can be overridden per call.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .sensitivity import Rect, check_rect_fits, check_rect_within

DTYPE = np.float32

DEFAULT_PARAMS: dict[str, dict] = {
    "invert": {},
    "hole": {},
    "brightness": {"factor": 1.5},
    "blur": {"sigma": 2.0, "kernel": 5},
    "gaussian_noise": {"sigma": 0.1},
}
TRANSFORM_NAMES = tuple(DEFAULT_PARAMS)


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Normalized 2-D Gaussian kernel, float64, odd size."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    grid = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-grid / (2.0 * float(sigma) ** 2))
    return kernel / kernel.sum()


def _blur_patch(patch: np.ndarray, sigma: float, size: int) -> np.ndarray:
    kernel = gaussian_kernel(sigma, size)
    pad = size // 2
    # edge padding realizes the clamp-to-rectangle sampling rule
    padded = np.pad(patch.astype(np.float64), ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (size, size), axis=(1, 2))
    return np.tensordot(windows, kernel, axes=([3, 4], [0, 1])).astype(DTYPE)


def apply_transform(image: np.ndarray, rect: Rect, name: str, *,
                    params: dict | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """New image with `name` applied inside `rect`."""
    image = np.asarray(image, dtype=DTYPE)
    if image.ndim != 3:
        raise ShapeMismatch(f"expected a (C, H, W) image, got {image.shape}")
    if name not in DEFAULT_PARAMS:
        raise ValueError(f"unknown transform {name!r}")
    check_rect_within(rect, (image.shape[1], image.shape[2]))
    cfg = dict(DEFAULT_PARAMS[name])
    if params:
        cfg.update(params)

    out = image.copy()
    region = (slice(None), *rect.slices)
    patch = out[region]

    if name == "invert":
        out[region] = DTYPE(1) - patch
    elif name == "hole":
        out[region] = DTYPE(0)
    elif name == "brightness":
        if not float(cfg["factor"]) > 0:
            raise ValueError(f"brightness factor must be positive, got {cfg['factor']}")
        out[region] = np.clip(patch * DTYPE(cfg["factor"]), DTYPE(0), DTYPE(1))
    elif name == "blur":
        size = int(cfg["kernel"])
        if size < 3 or size % 2 == 0:
            raise ValueError(f"blur kernel must be odd and >= 3, got {size}")
        out[region] = _blur_patch(patch, float(cfg["sigma"]), size)
    elif name == "gaussian_noise":
        if rng is None:
            raise ValueError("gaussian_noise needs an rng")
        if float(cfg["sigma"]) < 0:
            raise ValueError(f"noise sigma must be non-negative, got {cfg['sigma']}")
        noise = rng.normal(0.0, float(cfg["sigma"]), size=patch.shape).astype(DTYPE)
        out[region] = np.clip(patch + noise, DTYPE(0), DTYPE(1))
    return out


def random_rectangles(image_hw: tuple[int, int], width: int, height: int,
                      count: int, rng: np.random.Generator) -> list[Rect]:
    """`count` rectangles with anchors uniform over all in-bounds positions."""
    h, w = image_hw
    check_rect_fits((height, width), (h, w))
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    tops = rng.integers(0, h - height + 1, size=count)
    lefts = rng.integers(0, w - width + 1, size=count)
    return [Rect(int(t), int(l), height, width) for t, l in zip(tops, lefts)]
