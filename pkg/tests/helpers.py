"""Independent oracles used by the unit and acceptance tests.

Everything here re-derives expected values through a separate code path
from the library: float64 replays of the classifier head, brute-force
set-builder masks, loop-based geometry, and finite differences.  Tests
compare library output against these, never against the library itself.
"""
from __future__ import annotations

import numpy as np

from srmt import model as model_io


# ---------------------------------------------------------------------------
# float64 replay of the layers after the heat-map target layer
# ---------------------------------------------------------------------------

def head_layers(model: model_io.ModelSpec):
    target = model_io.resolved_target(model)
    return model.layers[target + 1:]


def float64_head(model: model_io.ModelSpec, feature_maps: np.ndarray) -> np.ndarray:
    """Replay pool/flatten/dense layers after the target conv in float64."""
    x = feature_maps.astype(np.float64)
    for layer in head_layers(model):
        if layer.kind == "maxpool2x2":
            c, h, w = x.shape
            x = x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))
        elif layer.kind == "flatten":
            x = x.reshape(-1)
        elif layer.kind == "dense":
            x = layer.weight.astype(np.float64) @ x + layer.bias.astype(np.float64)
            if layer.activation == "relu":
                x = np.maximum(x, 0.0)
        else:
            raise AssertionError(f"oracle cannot replay layer kind {layer.kind}")
    return x


def head_state(model: model_io.ModelSpec, feature_maps: np.ndarray):
    """Pool argmax patterns and relu masks of the float64 replay.

    Used to detect whether a perturbed replay crossed a kink: if the
    discrete state differs between +eps and -eps the function is not
    locally linear at that point.
    """
    x = feature_maps.astype(np.float64)
    state = []
    for layer in head_layers(model):
        if layer.kind == "maxpool2x2":
            c, h, w = x.shape
            win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
            win = win.reshape(c, h // 2, w // 2, 4)
            state.append(win.argmax(axis=3).copy())
            x = win.max(axis=3)
        elif layer.kind == "flatten":
            x = x.reshape(-1)
        elif layer.kind == "dense":
            x = layer.weight.astype(np.float64) @ x + layer.bias.astype(np.float64)
            if layer.activation == "relu":
                state.append(x > 0.0)
                x = np.maximum(x, 0.0)
    return state


def same_state(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def fd_logit_gradient(model, feature_maps: np.ndarray, class_index: int,
                      cell: tuple[int, int, int], eps: float):
    """Central finite difference of one logit wrt one feature-map cell.

    Returns (fd_value, locally_linear).  locally_linear is False when the
    +eps and -eps replays disagree on any pool argmax or relu mask, i.e.
    the cell sits on a kink where no single derivative exists.
    """
    plus = feature_maps.astype(np.float64).copy()
    minus = feature_maps.astype(np.float64).copy()
    plus[cell] += eps
    minus[cell] -= eps
    linear = same_state(head_state(model, plus), head_state(model, minus))
    fp = float64_head(model, plus)[class_index]
    fm = float64_head(model, minus)[class_index]
    return (fp - fm) / (2.0 * eps), linear


def fd_gradient_field(model, feature_maps: np.ndarray, class_index: int,
                      eps: float) -> np.ndarray:
    """Full finite-difference gradient field over every feature-map cell.

    At kink cells the central difference is replaced by the one-sided
    difference matching the library's documented subgradient choices
    (pool ties route to the first window element, relu'(0) = 0), derived
    here from the float64 replay alone.
    """
    base = feature_maps.astype(np.float64)
    f0 = float64_head(model, base)[class_index]
    state0 = head_state(model, base)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        plus[idx] += eps
        minus = base.copy()
        minus[idx] -= eps
        sp = head_state(model, plus)
        sm = head_state(model, minus)
        fp = float64_head(model, plus)[class_index]
        fm = float64_head(model, minus)[class_index]
        if same_state(sp, sm):
            grad[idx] = (fp - fm) / (2.0 * eps)
        elif same_state(sm, state0):
            # kink on the + side: the unperturbed discrete state continues
            # toward -eps, so the left slope is the subgradient in force
            grad[idx] = (f0 - fm) / eps
        else:
            grad[idx] = (fp - f0) / eps
    return grad


# ---------------------------------------------------------------------------
# heat-map pipeline oracle (mean weights, relu sum, normalize, upsample)
# ---------------------------------------------------------------------------

def oracle_upsample(raw: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample, written as explicit per-pixel math."""
    in_h, in_w = raw.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            y = i * (in_h - 1) / (out_h - 1) if out_h > 1 else 0.0
            x = j * (in_w - 1) / (out_w - 1) if out_w > 1 else 0.0
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
            dy, dx = y - y0, x - x0
            top = raw[y0, x0] * (1 - dx) + raw[y0, x1] * dx
            bot = raw[y1, x0] * (1 - dx) + raw[y1, x1] * dx
            out[i, j] = top * (1 - dy) + bot * dy
    return out


def oracle_heatmap(model, feature_maps: np.ndarray, class_index: int,
                   eps: float, out_hw: tuple[int, int]) -> np.ndarray:
    """End-to-end finite-difference heat map for one class."""
    field = fd_gradient_field(model, feature_maps, class_index, eps)
    alpha = field.mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(alpha, feature_maps.astype(np.float64), axes=1), 0.0)
    peak = raw.max()
    if peak > 0:
        raw = raw / peak
    up = oracle_upsample(raw, *out_hw)
    return np.clip(up, 0.0, 1.0)


# ---------------------------------------------------------------------------
# selection and geometry oracles
# ---------------------------------------------------------------------------

def mask_oracle(stack: np.ndarray, rule: str, threshold: float,
                best_class: int | None = None) -> np.ndarray:
    k, h, w = stack.shape
    out = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            if rule == "max":
                v = max(stack[c, i, j] for c in range(k))
            elif rule == "avg":
                v = sum(stack[c, i, j] for c in range(k)) / k
            else:
                v = stack[best_class, i, j]
            out[i, j] = threshold <= v
    return out


def rects_oracle(mask: np.ndarray, width: int, height: int, stride: int):
    h, w = mask.shape
    out = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            if r % stride or c % stride:
                continue
            if r + height > h or c + width > w:
                continue
            out.append((r, c, height, width))
    return out
