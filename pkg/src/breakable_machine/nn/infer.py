"""Forward inference: frame preprocessing, the conv stack, and softmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rasterops import resize_bilinear
from . import kernels
from .model import Model


@dataclass
class ClassificationResult:
    probs: np.ndarray        # [num_classes] float64, sums to 1
    logits: np.ndarray       # [num_classes] float32
    feature_maps: np.ndarray  # [K, H, W] float32, final conv output pre-pool
    top_label: int
    top_confidence: float


def preprocess(image: np.ndarray, target: int) -> np.ndarray:
    """Decoded RGB raster (H, W, 3) -> network input [3, target, target].

    Bilinear resize, scale to [0, 1], then map to [-1, 1] via (v - 0.5)/0.5.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB (H, W, 3) raster, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 1 or w < 1 or target < 1:
        raise ValueError("image and target dimensions must be positive")
    scaled = image.astype(np.float32) / 255.0
    resized = resize_bilinear(scaled, target, target)
    out = (resized - 0.5) / 0.5
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted stable softmax, computed in float64."""
    v = np.asarray(logits, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    e = np.exp(v - v.max())
    return e / e.sum()


def forward(model: Model, x: np.ndarray) -> ClassificationResult:
    """Runs the conv stack, retaining the final conv output for CAM use."""
    expected = (3, model.input_size, model.input_size)
    if tuple(x.shape) != expected:
        raise ValueError(f"input shape {tuple(x.shape)} does not match model {expected}")
    a = np.ascontiguousarray(x, dtype=np.float32)
    for ly in model.backbone:
        if ly.kind == "conv2d":
            a = kernels.conv2d(a, ly.weight, ly.bias, ly.stride, ly.padding, ly.groups)
        else:
            a = kernels.relu6(a)
    feature_maps = np.ascontiguousarray(a)
    pooled = kernels.global_avg_pool(feature_maps)
    logits = (model.head_weights @ pooled + model.head_bias).astype(np.float32)
    if not np.all(np.isfinite(logits)):
        raise ValueError("forward produced non-finite logits")
    probs = softmax(logits)
    top = int(np.argmax(probs))
    return ClassificationResult(
        probs=probs,
        logits=logits,
        feature_maps=feature_maps,
        top_label=top,
        top_confidence=float(probs[top]),
    )
