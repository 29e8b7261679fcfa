"""Model description and the BMNet weight container.

BMNet container, version 1:

    bytes 0..3    magic b"BMN1"
    bytes 4..7    uint32 little-endian header length N
    bytes 8..8+N  UTF-8 JSON header
    rest          one blob of float32 little-endian tensor values

Header JSON::

    {
      "version": 1,
      "input_size": 56,
      "labels": ["astronaut", "bear", ...],
      "layers": [
        {"kind": "conv2d", "stride": 2, "padding": 1, "groups": 1,
         "weight": {"shape": [8, 3, 3, 3], "offset": 0},
         "bias":   {"shape": [8], "offset": 864}},
        {"kind": "relu6"},
        {"kind": "gap"},
        {"kind": "linear",
         "weight": {"shape": [4, 32], "offset": ...},
         "bias":   {"shape": [4], "offset": ...}}
      ]
    }

Tensor offsets are byte positions relative to the start of the blob. Tensors
are laid out in header order (each layer's weight, then its bias) and must
tile the blob exactly. Conv weights are [out_c, in_c/groups, kh, kw]
row-major; the linear head weight is [num_classes, num_channels] row-major.

Batch norm is not a layer kind: weights must arrive with any normalization
pre-folded into the convolutions.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"BMN1"
FORMAT_VERSION = 1
LAYER_KINDS = ("conv2d", "relu6", "gap", "linear")


class ModelFormatError(ValueError):
    """Raised when a BMNet file or model description is invalid."""


@dataclass
class Layer:
    kind: str
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    groups: int = 1


@dataclass
class Model:
    """A validated inference network: conv/relu6 backbone, GAP, linear head.

    Treat instances as immutable; all weight arrays are read-only float32.
    Safe to share across threads.
    """

    layers: list[Layer]
    labels: list[str]
    input_size: int
    feature_channels: int = field(init=False)
    feature_size: int = field(init=False)

    def __post_init__(self):
        self.feature_channels, self.feature_size = _validate(self)

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    @property
    def head_weights(self) -> np.ndarray:
        return self.layers[-1].weight

    @property
    def head_bias(self) -> np.ndarray:
        return self.layers[-1].bias

    @property
    def backbone(self) -> list[Layer]:
        """Layers before global average pooling."""
        return [ly for ly in self.layers[:-2]]


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out is arr:
        out = out.copy()
    out.setflags(write=False)
    return out


def _validate(model: Model) -> tuple[int, int]:
    """Checks structural invariants; returns (final conv channels, spatial size)."""
    if model.input_size < 1:
        raise ModelFormatError("input_size must be positive")
    if not model.labels or not all(isinstance(s, str) and s for s in model.labels):
        raise ModelFormatError("labels must be a non-empty list of non-empty strings")
    kinds = [ly.kind for ly in model.layers]
    for k in kinds:
        if k not in LAYER_KINDS:
            raise ModelFormatError(f"unsupported layer kind {k!r}")
    if kinds.count("gap") != 1:
        raise ModelFormatError("model must contain exactly one gap layer")
    if kinds.count("linear") != 1 or kinds[-1] != "linear" or kinds[-2] != "gap":
        raise ModelFormatError("the linear head must be the only layer after gap")

    channels = 3
    size = model.input_size
    for ly in model.layers[:-2]:
        if ly.kind == "relu6":
            continue
        if ly.kind != "conv2d":
            raise ModelFormatError(f"layer kind {ly.kind!r} not allowed before gap")
        w, b = ly.weight, ly.bias
        if w is None or b is None or w.ndim != 4 or b.ndim != 1:
            raise ModelFormatError("conv2d layer needs a 4D weight and 1D bias")
        out_c, cpg, kh, kw = w.shape
        if kh != kw:
            raise ModelFormatError("only square conv kernels are supported")
        if ly.stride < 1 or ly.padding < 0 or ly.groups < 1:
            raise ModelFormatError("bad conv stride/padding/groups")
        if channels % ly.groups or out_c % ly.groups or cpg != channels // ly.groups:
            raise ModelFormatError(
                f"conv weight {w.shape} does not accept {channels} input channels "
                f"with groups={ly.groups}"
            )
        if b.shape[0] != out_c:
            raise ModelFormatError("conv bias length does not match output channels")
        channels = out_c
        size = conv_output_size(size, kh, ly.stride, ly.padding)
        if size < 1:
            raise ModelFormatError("conv stack shrinks the input below 1x1")

    head = model.layers[-1]
    if head.weight is None or head.bias is None or head.weight.ndim != 2:
        raise ModelFormatError("linear head needs a 2D weight and 1D bias")
    n_cls, n_feat = head.weight.shape
    if n_feat != channels:
        raise ModelFormatError(
            f"head expects {n_feat} channels but the backbone emits {channels}"
        )
    if head.bias.shape[0] != n_cls:
        raise ModelFormatError("head bias length does not match class count")
    if n_cls != len(model.labels):
        raise ModelFormatError("label count does not match head output size")
    for ly in model.layers:
        for arr in (ly.weight, ly.bias):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ModelFormatError("model weights contain non-finite values")
    return channels, size


def save_model(model: Model) -> bytes:
    """Serializes a Model to BMNet bytes (the reference writer)."""
    tensors: list[np.ndarray] = []
    layer_descs = []
    offset = 0

    def add(arr: np.ndarray) -> dict:
        nonlocal offset
        desc = {"shape": list(arr.shape), "offset": offset}
        tensors.append(arr)
        offset += arr.size * 4
        return desc

    for ly in model.layers:
        d: dict = {"kind": ly.kind}
        if ly.kind == "conv2d":
            d.update(stride=ly.stride, padding=ly.padding, groups=ly.groups)
        if ly.weight is not None:
            d["weight"] = add(ly.weight)
        if ly.bias is not None:
            d["bias"] = add(ly.bias)
        layer_descs.append(d)

    header = json.dumps(
        {
            "version": FORMAT_VERSION,
            "input_size": model.input_size,
            "labels": list(model.labels),
            "layers": layer_descs,
        },
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    return MAGIC + struct.pack("<I", len(header)) + header + blob


def load_model(data: bytes) -> Model:
    """Parses BMNet bytes into a validated Model.

    Raises ModelFormatError before any partially constructed model escapes.
    """
    if len(data) < 8 or data[:4] != MAGIC:
        raise ModelFormatError("malformed header: missing BMN1 magic")
    (header_len,) = struct.unpack("<I", data[4:8])
    if 8 + header_len > len(data):
        raise ModelFormatError("malformed header: header length exceeds file size")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise ModelFormatError("malformed header: not a JSON object")
    if header.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"malformed header: unsupported version {header.get('version')!r}")
    input_size = header.get("input_size")
    labels = header.get("labels")
    layer_descs = header.get("layers")
    if not isinstance(input_size, int) or not isinstance(labels, list) or not isinstance(layer_descs, list):
        raise ModelFormatError("malformed header: input_size/labels/layers missing or mistyped")

    blob = data[8 + header_len :]
    expected_offset = 0

    def take(desc, what: str) -> np.ndarray:
        nonlocal expected_offset
        if (
            not isinstance(desc, dict)
            or not isinstance(desc.get("shape"), list)
            or not isinstance(desc.get("offset"), int)
            or not all(isinstance(d, int) and d > 0 for d in desc["shape"])
        ):
            raise ModelFormatError(f"malformed header: bad tensor descriptor for {what}")
        shape = tuple(desc["shape"])
        nbytes = int(np.prod(shape)) * 4
        if desc["offset"] != expected_offset:
            raise ModelFormatError(
                f"tensor byte-length mismatch: {what} at offset {desc['offset']}, "
                f"expected {expected_offset}"
            )
        if expected_offset + nbytes > len(blob):
            raise ModelFormatError(f"tensor byte-length mismatch: {what} overruns the blob")
        arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=expected_offset)
        expected_offset += nbytes
        return _freeze(arr.reshape(shape))

    layers: list[Layer] = []
    for i, d in enumerate(layer_descs):
        if not isinstance(d, dict) or not isinstance(d.get("kind"), str):
            raise ModelFormatError(f"malformed header: layer {i} is not a descriptor")
        kind = d["kind"]
        if kind not in LAYER_KINDS:
            raise ModelFormatError(f"unsupported layer kind {kind!r}")
        if kind in ("relu6", "gap"):
            layers.append(Layer(kind=kind))
            continue
        stride = d.get("stride", 1)
        padding = d.get("padding", 0)
        groups = d.get("groups", 1)
        if not all(isinstance(v, int) for v in (stride, padding, groups)):
            raise ModelFormatError(f"malformed header: non-integer conv parameters in layer {i}")
        weight = take(d.get("weight"), f"layer {i} weight")
        bias = take(d.get("bias"), f"layer {i} bias")
        layers.append(Layer(kind=kind, weight=weight, bias=bias, stride=stride, padding=padding, groups=groups))

    if expected_offset != len(blob):
        raise ModelFormatError(
            f"tensor byte-length mismatch: blob has {len(blob)} bytes, header describes {expected_offset}"
        )
    return Model(layers=layers, labels=list(labels), input_size=input_size)


def bmnet_tiny(labels: list[str], seed: int = 0) -> Model:
    """Builds the desk-scale test network with seeded random weights.

    56x56x3 input, three stride-2 3x3 convs (8 -> 16 -> 32 channels, each
    followed by relu6), global average pool, linear head. The final feature
    maps are 32 channels at 7x7.
    """
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    channels = 3
    for out_c in (8, 16, 32):
        fan_in = channels * 9
        w = rng.normal(0.0, (2.0 / fan_in) ** 0.5, size=(out_c, channels, 3, 3))
        b = rng.uniform(-0.1, 0.1, size=out_c)
        layers.append(Layer("conv2d", _freeze(w), _freeze(b), stride=2, padding=1))
        layers.append(Layer("relu6"))
        channels = out_c
    layers.append(Layer("gap"))
    n_cls = len(labels)
    head_w = rng.normal(0.0, channels**-0.5, size=(n_cls, channels))
    head_b = rng.uniform(-0.5, 0.5, size=n_cls)
    layers.append(Layer("linear", _freeze(head_w), _freeze(head_b)))
    return Model(layers=layers, labels=list(labels), input_size=56)
