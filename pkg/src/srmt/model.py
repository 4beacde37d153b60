"""SRMTW v1 weight-file loading, validation, and writing.

Container layout, bit-exact:

    bytes 0..7    magic "SRMTW\\x00\\x00\\x01" (last byte = container version)
    bytes 8..11   little-endian u32: descriptor length n
    bytes 12..    n bytes of UTF-8 JSON architecture descriptor
    rest          one raw blob of little-endian float32, row-major, with each
                  layer's weight then bias concatenated in layer order

The descriptor carries: input_shape [C,H,W], num_classes, gradcam_target
(layer index or null for "last conv"), optional class_names, and a layer
list with kinds, shape parameters, and per-tensor element offsets into the
blob. Everything is validated eagerly at load; a loaded model is immutable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .errors import (
    BadMagic,
    MalformedDescriptor,
    ModelHasNoTargetLayer,
    ShapeChainBroken,
    TruncatedBlob,
    UnsupportedLayerKind,
    UnsupportedVersion,
)

MAGIC = b"SRMTW\x00\x00\x01"
LAYER_KINDS = ("conv2d", "maxpool2x2", "flatten", "dense")
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network, with its weights attached."""
    kind: str
    activation: str = "none"
    out_channels: int = 0          # conv2d
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    out_features: int = 0          # dense
    weight: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ModelSpec:
    """A fully validated, immutable model."""
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    num_classes: int
    gradcam_target: int | None
    class_names: tuple[str, ...] | None = None
    descriptor_bytes: bytes | None = field(default=None, repr=False)


def conv_layer(out_channels: int, kernel: tuple[int, int], *, stride: int = 1,
               padding: int = 0, activation: str = "relu",
               weight: np.ndarray | None = None, bias: np.ndarray | None = None) -> LayerSpec:
    return LayerSpec(kind="conv2d", activation=activation, out_channels=out_channels,
                     kernel=tuple(kernel), stride=stride, padding=padding,
                     weight=weight, bias=bias)


def dense_layer(out_features: int, *, activation: str = "none",
                weight: np.ndarray | None = None, bias: np.ndarray | None = None) -> LayerSpec:
    return LayerSpec(kind="dense", activation=activation, out_features=out_features,
                     weight=weight, bias=bias)


def maxpool_layer() -> LayerSpec:
    return LayerSpec(kind="maxpool2x2")


def flatten_layer() -> LayerSpec:
    return LayerSpec(kind="flatten")


def layer_output_shape(layer: LayerSpec, in_shape: tuple, index: int) -> tuple:
    """Shape produced by `layer` on `in_shape`; raises ShapeChainBroken."""
    k = layer.kind
    if k == "conv2d":
        if len(in_shape) != 3:
            raise ShapeChainBroken(f"layer {index}: conv2d needs a (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        kh, kw = layer.kernel
        try:
            ho, wo = nn.conv_output_hw(h, w, kh, kw, layer.stride, layer.padding)
        except Exception as exc:
            raise ShapeChainBroken(f"layer {index}: {exc}") from exc
        return (layer.out_channels, ho, wo)
    if k == "maxpool2x2":
        if len(in_shape) != 3:
            raise ShapeChainBroken(f"layer {index}: maxpool2x2 needs a (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ShapeChainBroken(f"layer {index}: maxpool2x2 needs spatial dims >= 2, got {h}x{w}")
        return (c, h // 2, w // 2)
    if k == "flatten":
        if len(in_shape) != 3:
            raise ShapeChainBroken(f"layer {index}: flatten needs a (C, H, W) input, got {in_shape}")
        return (int(np.prod(in_shape)),)
    if k == "dense":
        if len(in_shape) != 1:
            raise ShapeChainBroken(f"layer {index}: dense needs a flat input, got {in_shape}")
        return (layer.out_features,)
    raise UnsupportedLayerKind(f"layer {index}: unknown kind {layer.kind!r}")


def _param_shapes(layer: LayerSpec, in_shape: tuple) -> list[tuple]:
    """Shapes of the layer's weight tensors, in blob order."""
    if layer.kind == "conv2d":
        c = in_shape[0]
        kh, kw = layer.kernel
        return [(layer.out_channels, c, kh, kw), (layer.out_channels,)]
    if layer.kind == "dense":
        return [(layer.out_features, in_shape[0]), (layer.out_features,)]
    return []


def shape_chain(input_shape: tuple, layers) -> list[tuple]:
    """Shapes flowing through the network, including the input."""
    shapes = [tuple(input_shape)]
    for i, layer in enumerate(layers):
        shapes.append(layer_output_shape(layer, shapes[-1], i))
    return shapes


def last_conv_index(layers) -> int | None:
    idx = None
    for i, layer in enumerate(layers):
        if layer.kind == "conv2d":
            idx = i
    return idx


def validate_model(spec: ModelSpec) -> None:
    """Check every structural invariant; raises a ModelLoadError subclass."""
    if len(spec.input_shape) != 3 or any(int(d) <= 0 for d in spec.input_shape):
        raise MalformedDescriptor(f"input_shape must be 3 positive ints, got {spec.input_shape}")
    shapes = shape_chain(spec.input_shape, spec.layers)
    if shapes[-1] != (spec.num_classes,):
        raise ShapeChainBroken(
            f"final layer emits {shapes[-1]}, expected ({spec.num_classes},)"
        )
    target = spec.gradcam_target
    if last_conv_index(spec.layers) is None:
        raise ModelHasNoTargetLayer("model has no convolutional layer")
    if target is not None:
        if not 0 <= target < len(spec.layers) or spec.layers[target].kind != "conv2d":
            raise ModelHasNoTargetLayer(f"gradcam_target {target} is not a conv2d layer")
    if spec.class_names is not None and len(spec.class_names) != spec.num_classes:
        raise MalformedDescriptor(
            f"{len(spec.class_names)} class names for {spec.num_classes} classes"
        )
    for i, (layer, in_shape) in enumerate(zip(spec.layers, shapes[:-1])):
        if layer.activation not in ACTIVATIONS:
            raise MalformedDescriptor(f"layer {i}: unknown activation {layer.activation!r}")
        for got, want in zip((layer.weight, layer.bias), _param_shapes(layer, in_shape)):
            if got is None:
                raise MalformedDescriptor(f"layer {i}: missing weights")
            if got.shape != want:
                raise ShapeChainBroken(f"layer {i}: weight shape {got.shape}, expected {want}")
            if got.dtype != np.float32:
                raise MalformedDescriptor(f"layer {i}: weights must be float32")
            if not np.all(np.isfinite(got)):
                raise MalformedDescriptor(f"layer {i}: non-finite values in weights")


def resolved_target(spec: ModelSpec) -> int:
    """gradcam_target with the "last conv layer" default applied."""
    if spec.gradcam_target is not None:
        return spec.gradcam_target
    idx = last_conv_index(spec.layers)
    if idx is None:
        raise ModelHasNoTargetLayer("model has no convolutional layer")
    return idx


def new_model(input_shape, layers, *, class_names=None, gradcam_target=None) -> ModelSpec:
    """Assemble and validate a ModelSpec from in-memory layers."""
    layers = tuple(
        replace(l, weight=None if l.weight is None else nn.as_tensor(l.weight),
                bias=None if l.bias is None else nn.as_tensor(l.bias))
        for l in layers
    )
    shapes = shape_chain(tuple(input_shape), layers)
    spec = ModelSpec(
        input_shape=tuple(int(d) for d in input_shape),
        layers=layers,
        num_classes=int(shapes[-1][0]) if len(shapes[-1]) == 1 else 0,
        gradcam_target=gradcam_target,
        class_names=None if class_names is None else tuple(class_names),
    )
    spec = replace(spec, gradcam_target=resolved_target(spec))
    validate_model(spec)
    return spec


# ---------------------------------------------------------------------------
# container parsing
# ---------------------------------------------------------------------------

def load_model(path) -> ModelSpec:
    """Load and eagerly validate an SRMTW v1 file."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:7] != MAGIC[:7]:
        raise BadMagic(f"{path}: not an SRMTW file")
    if data[7] != MAGIC[7]:
        raise UnsupportedVersion(f"{path}: container version {data[7]}, engine supports 1")
    if len(data) < 12:
        raise MalformedDescriptor(f"{path}: missing descriptor length")
    n = int.from_bytes(data[8:12], "little")
    if len(data) < 12 + n:
        raise MalformedDescriptor(f"{path}: descriptor truncated ({len(data) - 12} of {n} bytes)")
    desc_bytes = data[12:12 + n]
    try:
        desc = json.loads(desc_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedDescriptor(f"{path}: descriptor is not valid JSON: {exc}") from exc

    blob_bytes = data[12 + n:]
    if len(blob_bytes) % 4:
        blob_bytes = blob_bytes[:len(blob_bytes) - len(blob_bytes) % 4]
    blob = np.frombuffer(blob_bytes, dtype="<f4")

    try:
        input_shape = tuple(int(d) for d in desc["input_shape"])
        num_classes = int(desc["num_classes"])
        raw_layers = desc["layers"]
        gradcam_target = desc.get("gradcam_target")
        class_names = desc.get("class_names")
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDescriptor(f"{path}: descriptor missing field: {exc}") from exc
    if gradcam_target is not None:
        gradcam_target = int(gradcam_target)

    layers: list[LayerSpec] = []
    shape = input_shape
    offset = 0
    for i, entry in enumerate(raw_layers):
        kind = entry.get("kind")
        if kind not in LAYER_KINDS:
            raise UnsupportedLayerKind(f"{path}: layer {i}: kind {kind!r}")
        try:
            if kind == "conv2d":
                layer = LayerSpec(
                    kind=kind,
                    activation=entry.get("activation", "none"),
                    out_channels=int(entry["out_channels"]),
                    kernel=(int(entry["kernel"][0]), int(entry["kernel"][1])),
                    stride=int(entry.get("stride", 1)),
                    padding=int(entry.get("padding", 0)),
                )
            elif kind == "dense":
                layer = LayerSpec(
                    kind=kind,
                    activation=entry.get("activation", "none"),
                    out_features=int(entry["out_features"]),
                )
            else:
                layer = LayerSpec(kind=kind)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MalformedDescriptor(f"{path}: layer {i}: bad parameters: {exc}") from exc

        params = _param_shapes(layer, shape)
        if params:
            declared = (entry.get("weight_offset"), entry.get("bias_offset"))
            tensors = []
            for want_shape, declared_off, label in zip(params, declared, ("weight", "bias")):
                size = int(np.prod(want_shape))
                if declared_off is not None and int(declared_off) != offset:
                    raise MalformedDescriptor(
                        f"{path}: layer {i}: {label}_offset {declared_off} != blob position {offset}"
                    )
                if offset + size > blob.size:
                    raise TruncatedBlob(
                        f"{path}: layer {i}: {label} needs elements "
                        f"[{offset}, {offset + size}), blob has {blob.size}"
                    )
                tensors.append(np.array(blob[offset:offset + size]).reshape(want_shape))
                offset += size
            layer = replace(layer, weight=tensors[0], bias=tensors[1])
        layers.append(layer)
        shape = layer_output_shape(layer, shape, i)

    if offset != blob.size:
        raise MalformedDescriptor(
            f"{path}: blob has {blob.size} elements, layers consume {offset}"
        )

    spec = ModelSpec(
        input_shape=input_shape,
        layers=tuple(layers),
        num_classes=num_classes,
        gradcam_target=gradcam_target,
        class_names=None if class_names is None else tuple(class_names),
        descriptor_bytes=bytes(desc_bytes),
    )
    spec = replace(spec, gradcam_target=resolved_target(spec))
    validate_model(spec)
    return spec


def descriptor_dict(spec: ModelSpec) -> dict:
    """Canonical descriptor for a spec, offsets included."""
    layers = []
    shapes = shape_chain(spec.input_shape, spec.layers)
    offset = 0
    for layer, in_shape in zip(spec.layers, shapes[:-1]):
        entry: dict = {"kind": layer.kind}
        if layer.kind == "conv2d":
            entry.update(activation=layer.activation, out_channels=layer.out_channels,
                         kernel=list(layer.kernel), stride=layer.stride, padding=layer.padding)
        elif layer.kind == "dense":
            entry.update(activation=layer.activation, out_features=layer.out_features)
        sizes = [int(np.prod(s)) for s in _param_shapes(layer, in_shape)]
        if sizes:
            entry["weight_offset"] = offset
            entry["bias_offset"] = offset + sizes[0]
            offset += sum(sizes)
        layers.append(entry)
    return {
        "input_shape": list(spec.input_shape),
        "num_classes": spec.num_classes,
        "gradcam_target": spec.gradcam_target,
        "class_names": None if spec.class_names is None else list(spec.class_names),
        "layers": layers,
    }


def write_model(spec: ModelSpec, path) -> None:
    """Write an SRMTW v1 file; re-emits the original descriptor bytes when present."""
    validate_model(spec)
    if spec.descriptor_bytes is not None:
        desc_bytes = spec.descriptor_bytes
    else:
        desc_bytes = json.dumps(descriptor_dict(spec), sort_keys=True,
                                separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, len(desc_bytes).to_bytes(4, "little"), desc_bytes]
    for layer in spec.layers:
        for arr in (layer.weight, layer.bias):
            if arr is not None:
                parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)
