"""Sensitive-region masks and candidate rectangle geometry.

A mask marks pixels whose heat-map response reaches a threshold. Three
rules fuse a per-class heat-map stack into one score map: "max" and
"avg" reduce across classes with those statistics, "best" reads the
single map of the predicted class. The comparison is inclusive: a pixel
exactly at the threshold is sensitive.

Candidate rectangles anchor their top-left corner on sensitive pixels
whose coordinates are both multiples of the anchor stride. Rectangles
that would cross the image edge are discarded, never clipped, so every
candidate has the full configured size. Enumeration is row-major by
anchor, which fixes the candidate order for a given mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyHeatmapList, RectLargerThanImage, RectOutOfBounds

RULES = ("max", "avg", "best")


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned rectangle in pixel coordinates, anchored top-left."""
    top: int
    left: int
    height: int
    width: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.top, self.top + self.height),
                slice(self.left, self.left + self.width))

    @property
    def center(self) -> tuple[int, int]:
        """Center pixel; even dimensions round toward the anchor."""
        return (self.top + (self.height - 1) // 2,
                self.left + (self.width - 1) // 2)


def check_rect_fits(rect_hw: tuple[int, int], image_hw: tuple[int, int]) -> None:
    rh, rw = rect_hw
    h, w = image_hw
    if rh <= 0 or rw <= 0:
        raise RectLargerThanImage(f"rectangle {rh}x{rw} is empty")
    if rh > h or rw > w:
        raise RectLargerThanImage(f"rectangle {rh}x{rw} cannot fit in a {h}x{w} image")


def check_rect_within(rect: Rect, image_hw: tuple[int, int]) -> None:
    h, w = image_hw
    if rect.top < 0 or rect.left < 0 or rect.top + rect.height > h or rect.left + rect.width > w:
        raise RectOutOfBounds(
            f"rectangle at ({rect.top}, {rect.left}) size {rect.height}x{rect.width} "
            f"leaves the {h}x{w} image"
        )


def _stack(heatmaps) -> np.ndarray:
    arr = np.stack([np.asarray(m) for m in heatmaps]) if isinstance(heatmaps, (list, tuple)) \
        else np.asarray(heatmaps)
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise EmptyHeatmapList(f"need a non-empty (num_classes, H, W) stack, got {arr.shape}")
    return arr


def fused_map(heatmaps, rule: str, *, best_class: int | None = None) -> np.ndarray:
    """Per-pixel fusion score for a selection rule, shape (H, W)."""
    arr = _stack(heatmaps)
    if rule == "max":
        return arr.max(axis=0)
    if rule == "avg":
        return arr.mean(axis=0)
    if rule == "best":
        if best_class is None:
            raise ValueError("rule 'best' needs best_class")
        if not 0 <= int(best_class) < arr.shape[0]:
            raise EmptyHeatmapList(
                f"best_class {best_class} outside stack of {arr.shape[0]} maps"
            )
        return arr[int(best_class)]
    raise ValueError(f"unknown selection rule {rule!r}")


def max_selection(heatmaps, threshold: float) -> np.ndarray:
    """Pixels whose across-class maximum reaches the threshold."""
    return fused_map(heatmaps, "max") >= threshold


def avg_selection(heatmaps, threshold: float) -> np.ndarray:
    """Pixels whose across-class mean reaches the threshold."""
    return fused_map(heatmaps, "avg") >= threshold


def best_selection(heatmaps, prediction, threshold: float) -> np.ndarray:
    """Pixels of the predicted class's map that reach the threshold.

    `prediction` may be a forward-pass result or a bare class index;
    probability ties resolve to the lowest class index.
    """
    if hasattr(prediction, "probabilities"):
        cls = int(np.argmax(prediction.probabilities))
    else:
        cls = int(prediction)
    return fused_map(heatmaps, "best", best_class=cls) >= threshold


def enumerate_rectangles(mask: np.ndarray, width: int, height: int, stride: int) -> list[Rect]:
    """Candidate rectangles anchored on stride-aligned sensitive pixels."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    check_rect_fits((height, width), (h, w))
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    rects: list[Rect] = []
    # argwhere walks the strided view row-major, fixing candidate order
    for i, j in np.argwhere(mask[::stride, ::stride]):
        top = int(i) * stride
        left = int(j) * stride
        if top + height <= h and left + width <= w:
            rects.append(Rect(top, left, height, width))
    return rects
