"""Class activation heat maps from convolutional feature gradients.

For a class c, each feature map of the designated target layer gets a
weight equal to the spatial mean of the gradient of the class logit
(pre-softmax) with respect to that map. The raw map is the ReLU of the
weighted sum of the maps. It is then rescaled so its peak is 1 (an
all-zero map stays zero), bilinearly resampled (corner-aligned) to input
resolution, and clamped to [0, 1].
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from . import nn
from .errors import ShapeMismatch
from .nn import DTYPE, Prediction


def feature_weights(grad_field: np.ndarray) -> np.ndarray:
    """Per-map weights: the spatial mean of the gradient, shape (K,)."""
    grad_field = np.asarray(grad_field)
    if grad_field.ndim != 3:
        raise ShapeMismatch(f"expected a (K, h, w) gradient field, got {grad_field.shape}")
    return grad_field.mean(axis=(1, 2))


def raw_heatmap(weights: np.ndarray, feature_maps: np.ndarray) -> np.ndarray:
    """ReLU of the weight-summed feature maps, at target-layer resolution."""
    weights = np.asarray(weights)
    feature_maps = np.asarray(feature_maps)
    if feature_maps.ndim != 3 or weights.shape != (feature_maps.shape[0],):
        raise ShapeMismatch(
            f"{weights.shape} weights do not match {feature_maps.shape} feature maps"
        )
    raw = np.tensordot(weights, feature_maps, axes=(0, 0))
    return np.maximum(raw, DTYPE(0))


def upsample_bilinear(map2d: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D map."""
    map2d = np.asarray(map2d)
    h_in, w_in = map2d.shape
    h_out, w_out = out_hw

    def axis_coords(n_in: int, n_out: int):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out, dtype=DTYPE)
        else:
            pos = np.arange(n_out, dtype=DTYPE) * DTYPE((n_in - 1) / (n_out - 1))
        lo = np.minimum(pos.astype(np.int64), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (pos - lo.astype(DTYPE))

    r0, r1, tr = axis_coords(h_in, h_out)
    c0, c1, tc = axis_coords(w_in, w_out)
    rows0 = map2d[r0]                        # (h_out, w_in)
    rows1 = map2d[r1]
    # lerp form a + t*(b - a): exact when a == b, so flat maps stay flat
    rows = rows0 + tr[:, None] * (rows1 - rows0)
    left = rows[:, c0]
    right = rows[:, c1]
    return left + tc[None, :] * (right - left)


def normalize_and_upsample(raw: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Peak-normalize, resample to target resolution, clamp to [0, 1]."""
    raw = np.asarray(raw)
    peak = raw.max(initial=DTYPE(0))
    scaled = raw / peak if peak > 0 else raw
    fine = upsample_bilinear(scaled, target_hw)
    return np.clip(fine, DTYPE(0), DTYPE(1)).astype(DTYPE, copy=False)


def class_heatmap(model, image, class_index: int, *,
                  prediction: Prediction | None = None) -> np.ndarray:
    """Normalized input-resolution heat map for one class, shape (H, W)."""
    if prediction is None:
        prediction = nn.forward(model, image)
    grads = nn.grad_wrt_feature_maps(model, image, class_index, prediction=prediction)
    coarse = raw_heatmap(feature_weights(grads), prediction.target_feature_maps)
    return normalize_and_upsample(coarse, (image.shape[-2], image.shape[-1]))


def all_class_heatmaps(model, image, *, prediction: Prediction | None = None) -> np.ndarray:
    """Heat maps for every class in index order, shape (num_classes, H, W).

    The forward pass runs once; only the per-class backward sweep repeats.
    """
    if prediction is None:
        prediction = nn.forward(model, image)
    return np.stack([
        class_heatmap(model, image, c, prediction=prediction)
        for c in range(model.num_classes)
    ], axis=0)


def best_class(prediction: Prediction) -> int:
    """Predicted class; probability ties resolve to the lowest index."""
    return int(np.argmax(prediction.probabilities))


def save_gray_png(grid: np.ndarray, path) -> None:
    """Export a [0, 1] map as 8-bit grayscale, rounding half away from zero."""
    quantized = np.floor(np.asarray(grid, dtype=np.float64) * 255.0 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8)
    tmp = str(path) + ".tmp"
    Image.fromarray(quantized, mode="L").save(tmp, format="PNG")
    os.replace(tmp, path)
