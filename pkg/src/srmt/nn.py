"""Forward and targeted-backward kernels for small VGG-style CNNs.

Conventions: a single image is a float32 array of shape (C, H, W), a batch
is (N, C, H, W), both row-major. Convolution is cross-correlation with
zero padding. The backward pass is deliberately partial: it propagates the
gradient of one pre-softmax logit from the classifier head down to the
post-activation output of a designated convolutional layer, reusing the
ReLU masks and pooling argmax indices recorded during the forward pass.
Nothing here trains a model.

All arithmetic and accumulation is 32-bit; outputs are freshly allocated,
so any number of threads may run passes over the same immutable model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidClass, ModelHasNoTargetLayer, ShapeMismatch

if TYPE_CHECKING:
    from .model import ModelSpec

DTYPE = np.float32


def as_tensor(values) -> np.ndarray:
    """Coerce to a contiguous float32 array."""
    return np.ascontiguousarray(np.asarray(values, dtype=DTYPE))


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    """Output spatial dims of a convolution; raises if the stride does not divide exactly."""
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeMismatch(
            f"kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ShapeMismatch(
            f"stride {stride} does not divide padded extent ({hp - kh}, {wp - kw}) exactly"
        )
    return (hp - kh) // stride + 1, (wp - kw) // stride + 1


# ---------------------------------------------------------------------------
# batched layer kernels (N, C, H, W)
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (N, C, ho, wo, kh, kw)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _conv2d_batch(x, weights, bias, stride, padding):
    n, c, h, w = x.shape
    k, cw, kh, kw = weights.shape
    if cw != c:
        raise ShapeMismatch(f"conv weights expect {cw} input channels, image has {c}")
    if bias.shape != (k,):
        raise ShapeMismatch(f"conv bias must have shape ({k},), got {bias.shape}")
    cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    out = np.matmul(weights.reshape(k, c * kh * kw), cols)  # (N, K, ho*wo)
    out += bias.reshape(1, k, 1)
    return out.reshape(n, k, ho, wo)


def _conv2d_backward_input(dy, weights, stride, padding, x_shape):
    """Gradient w.r.t. the convolution input, given the output gradient."""
    n, c, h, w = x_shape
    k, _, kh, kw = weights.shape
    ho, wo = conv_output_hw(h, w, kh, kw, stride, padding)
    dcols = np.matmul(weights.reshape(k, -1).T, dy.reshape(n, k, ho * wo))
    dcols = dcols.reshape(n, c, kh, kw, ho, wo)
    hp, wp = h + 2 * padding, w + 2 * padding
    dpad = np.zeros((n, c, hp, wp), DTYPE)
    for u in range(kh):
        for v in range(kw):
            dpad[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += dcols[:, :, u, v]
    if padding:
        dpad = dpad[:, :, padding:hp - padding, padding:wp - padding]
    return dpad


def _maxpool_batch(x):
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeMismatch(f"max-pool needs spatial dims >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    off = np.argmax(win, axis=4)  # ties -> first element in row-major window order
    out = np.take_along_axis(win, off[..., None], axis=4)[..., 0]
    rows = np.arange(h2).reshape(1, 1, h2, 1) * 2 + off // 2
    cols = np.arange(w2).reshape(1, 1, 1, w2) * 2 + off % 2
    idx = (rows * w + cols).astype(np.int64)  # flat index into the input H*W plane
    return np.ascontiguousarray(out), idx


def _maxpool_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    dx = np.zeros((n, c, h * w), DTYPE)
    # pool windows are disjoint, so a plain scatter is exact
    np.put_along_axis(dx, idx.reshape(n, c, -1), dy.reshape(n, c, -1).astype(DTYPE), axis=2)
    return dx.reshape(n, c, h, w)


def _relu(x):
    return np.maximum(x, DTYPE(0))


def _dense_batch(x, weights, bias):
    n, m = x.shape[0], weights.shape[0]
    if weights.shape[1] != x.shape[1]:
        raise ShapeMismatch(
            f"dense weights expect input of length {weights.shape[1]}, got {x.shape[1]}"
        )
    if bias.shape != (m,):
        raise ShapeMismatch(f"dense bias must have shape ({m},), got {bias.shape}")
    return np.matmul(x, weights.T) + bias


# ---------------------------------------------------------------------------
# public single-image operations
# ---------------------------------------------------------------------------

def conv2d_forward(image: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                   stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate a (C, H, W) image with (K, C, kh, kw) kernels."""
    if image.ndim != 3:
        raise ShapeMismatch(f"expected (C, H, W) image, got shape {image.shape}")
    return _conv2d_batch(image[None], weights, bias, stride, padding)[0]


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return _relu(x)


def maxpool2x2_forward(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool of a (C, H, W) image.

    Returns the pooled map and, per output cell, the flat H*W index of the
    winning input pixel (ties go to the first element in row-major window
    order). Trailing odd rows/columns are dropped.
    """
    if image.ndim != 3:
        raise ShapeMismatch(f"expected (C, H, W) image, got shape {image.shape}")
    out, idx = _maxpool_batch(image[None])
    return out[0], idx[0]


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """weights @ x + bias for a flat input vector."""
    if x.ndim != 1:
        raise ShapeMismatch(f"expected flat vector, got shape {x.shape}")
    return _dense_batch(x[None], weights, bias)[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# whole-model passes
# ---------------------------------------------------------------------------

@dataclass
class _LayerState:
    """Forward-pass bookkeeping one layer needs for the backward sweep."""
    in_shape: tuple
    out: np.ndarray | None = None       # post-activation output (ReLU layers only)
    pool_idx: np.ndarray | None = None  # argmax indices (max-pool only)


@dataclass
class Prediction:
    """Everything the engine records about one forward pass."""
    logits: np.ndarray
    probabilities: np.ndarray
    target_feature_maps: np.ndarray  # post-activation output of the heat-map target layer
    best_class: int
    trace: list[_LayerState] = field(repr=False, default_factory=list)


def _run_layers(model, x, start: int, record: bool):
    """Run layers [start:] on a batched tensor; optionally record backward state."""
    trace: list[_LayerState] = []
    for layer in model.layers[start:]:
        state = _LayerState(in_shape=x.shape)
        if layer.kind == "conv2d":
            x = _conv2d_batch(x, layer.weight, layer.bias, layer.stride, layer.padding)
            if layer.activation == "relu":
                x = _relu(x)
            state.out = x  # post-activation; also serves as the heat-map target
        elif layer.kind == "maxpool2x2":
            x, idx = _maxpool_batch(x)
            state.pool_idx = idx
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "dense":
            x = _dense_batch(x, layer.weight, layer.bias)
            if layer.activation == "relu":
                x = _relu(x)
                state.out = x
        else:  # pragma: no cover - load_model rejects unknown kinds
            raise ShapeMismatch(f"unknown layer kind {layer.kind!r}")
        if record:
            trace.append(state)
    return x, trace


def forward(model: "ModelSpec", image: np.ndarray) -> Prediction:
    """Full forward pass of one image, with state recorded for the backward sweep."""
    image = _check_input(model, image)
    logits, trace = _run_layers(model, image[None], 0, record=True)
    logits = logits[0]
    probs = softmax(logits)
    target = model.gradcam_target
    if target is None:
        raise ModelHasNoTargetLayer("model has no convolutional layer")
    fmaps = trace[target].out
    if fmaps is None:  # conv without ReLU keeps no stored output; recompute is not needed
        raise ModelHasNoTargetLayer(f"target layer {target} recorded no activation output")
    return Prediction(
        logits=logits,
        probabilities=probs,
        target_feature_maps=fmaps[0],
        best_class=int(np.argmax(probs)),
        trace=trace,
    )


def forward_batch(model: "ModelSpec", images: np.ndarray) -> np.ndarray:
    """Logits for a (N, C, H, W) batch; no backward state is kept."""
    if images.ndim != 4:
        raise ShapeMismatch(f"expected (N, C, H, W) batch, got shape {images.shape}")
    if tuple(images.shape[1:]) != tuple(model.input_shape):
        raise ShapeMismatch(
            f"model expects input {tuple(model.input_shape)}, got {tuple(images.shape[1:])}"
        )
    logits, _ = _run_layers(model, np.ascontiguousarray(images, dtype=DTYPE), 0, record=False)
    return logits


def forward_head(model: "ModelSpec", feature_maps: np.ndarray) -> np.ndarray:
    """Logits from the target layer's post-activation maps through the rest of the net."""
    target = model.gradcam_target
    if target is None:
        raise ModelHasNoTargetLayer("model has no convolutional layer")
    x = np.ascontiguousarray(feature_maps, dtype=DTYPE)[None]
    logits, _ = _run_layers(model, x, target + 1, record=False)
    return logits[0]


def _check_input(model, image):
    image = np.ascontiguousarray(image, dtype=DTYPE)
    if image.shape != tuple(model.input_shape):
        raise ShapeMismatch(
            f"model expects input {tuple(model.input_shape)}, got {tuple(image.shape)}"
        )
    return image


def grad_wrt_feature_maps(model: "ModelSpec", image: np.ndarray, class_index: int,
                          *, prediction: Prediction | None = None) -> np.ndarray:
    """Gradient of the pre-softmax logit for one class w.r.t. the target layer's
    post-activation feature maps.

    Reuses the forward pass recorded in `prediction` when given; never
    propagates past the target layer.
    """
    if not 0 <= int(class_index) < model.num_classes:
        raise InvalidClass(f"class {class_index} outside [0, {model.num_classes})")
    target = model.gradcam_target
    if target is None:
        raise ModelHasNoTargetLayer("model has no convolutional layer")
    pred = prediction if prediction is not None else forward(model, image)
    trace = pred.trace
    g = np.zeros((1, model.num_classes), DTYPE)
    g[0, int(class_index)] = 1.0
    for i in range(len(model.layers) - 1, target, -1):
        layer, state = model.layers[i], trace[i]
        if layer.kind == "dense":
            if layer.activation == "relu":
                g = g * (state.out > 0)
            g = np.matmul(g, layer.weight)
        elif layer.kind == "conv2d":
            if layer.activation == "relu":
                g = g * (state.out > 0)
            g = _conv2d_backward_input(g, layer.weight, layer.stride, layer.padding, state.in_shape)
        elif layer.kind == "maxpool2x2":
            g = _maxpool_backward(g, state.pool_idx, state.in_shape)
        elif layer.kind == "flatten":
            g = g.reshape(state.in_shape)
    return g[0]
