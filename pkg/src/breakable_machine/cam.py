"""Class activation maps from the final conv layer, plus heatmap rendering.

With a global-average-pool + linear head, the per-class spatial score at
(y, x) is bias[c] + sum_k W[c, k] * F[k, y, x]; its spatial mean equals the
classifier logit, which is the identity the tests lean on. The CAM drops
the bias (spatially constant, cancels under normalization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rasterops import resize_bilinear

# Fixed 3-stop colormap, linear per channel: blue -> yellow -> red.
_STOPS = np.array([[0, 0, 255], [255, 255, 0], [255, 0, 0]], dtype=np.float64)


@dataclass
class CamGrid:
    values: np.ndarray  # (H, W) float32
    class_index: int
    normalized: bool


def per_position_scores(feature_maps: np.ndarray, head_weights: np.ndarray,
                        head_bias: np.ndarray) -> np.ndarray:
    """Full classification scores at every spatial position.

    [K, H, W], [C, K], [C] -> [C, H, W] with
    out[c, y, x] = bias[c] + sum_k W[c, k] * F[k, y, x].
    """
    k, h, w = feature_maps.shape
    if head_weights.ndim != 2 or head_weights.shape[1] != k:
        raise ValueError(
            f"head weights {head_weights.shape} do not match {k} feature channels"
        )
    if head_bias.shape != (head_weights.shape[0],):
        raise ValueError("head bias length does not match class count")
    flat = head_weights @ feature_maps.reshape(k, h * w)
    return (flat.reshape(-1, h, w) + head_bias[:, None, None]).astype(np.float32)


def compute_cam(feature_maps: np.ndarray, head_weights: np.ndarray,
                class_index: int) -> CamGrid:
    """Unnormalized class activation map for one class (bias excluded)."""
    k, h, w = feature_maps.shape
    if head_weights.ndim != 2 or head_weights.shape[1] != k:
        raise ValueError(
            f"head weights {head_weights.shape} do not match {k} feature channels"
        )
    if not 0 <= class_index < head_weights.shape[0]:
        raise ValueError(f"class index {class_index} out of range")
    values = (head_weights[class_index] @ feature_maps.reshape(k, h * w)).reshape(h, w)
    return CamGrid(values=values.astype(np.float32), class_index=class_index, normalized=False)


def normalize_cam(grid: CamGrid) -> CamGrid:
    """Min-max normalization to [0, 1]; constant grids map to all zeros."""
    v = grid.values
    if not np.all(np.isfinite(v)):
        raise ValueError("CAM grid contains non-finite values")
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        out = np.zeros_like(v, dtype=np.float32)
    else:
        out = ((v - lo) / (hi - lo)).astype(np.float32)
    return CamGrid(values=out, class_index=grid.class_index, normalized=True)


def upsample_bilinear(grid: CamGrid, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear upsample of a normalized grid to (out_h, out_w)."""
    if not grid.normalized:
        raise ValueError("upsample expects a normalized grid")
    h, w = grid.values.shape
    if out_h < h or out_w < w:
        raise ValueError("output dimensions must be >= grid dimensions")
    return resize_bilinear(grid.values, out_h, out_w)


def colormap(values: np.ndarray | float) -> np.ndarray:
    """Maps values in [0, 1] to RGB bytes along blue(0) -> yellow(0.5) -> red(1).

    Linear interpolation per channel between the stops; bytes are rounded
    half-up so the mapping is bit-exact across implementations.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    t = np.where(v < 0.5, v * 2.0, (v - 0.5) * 2.0)[..., None]
    lo = np.where(v[..., None] < 0.5, _STOPS[0], _STOPS[1])
    hi = np.where(v[..., None] < 0.5, _STOPS[1], _STOPS[2])
    rgb = lo * (1.0 - t) + hi * t
    return np.floor(rgb + 0.5).astype(np.uint8)


def render_heatmap(overlay: np.ndarray, base_frame: np.ndarray, alpha: float) -> np.ndarray:
    """Blends the colormapped overlay onto an RGB frame; returns RGBA bytes.

    Per pixel the colormap color is mixed in at weight alpha * overlay value,
    so cold regions leave the camera frame visible.
    """
    if overlay.shape != base_frame.shape[:2]:
        raise ValueError(
            f"overlay {overlay.shape} does not match frame {base_frame.shape[:2]}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    w = (alpha * np.asarray(overlay, dtype=np.float64))[..., None]
    colored = colormap(overlay).astype(np.float64)
    rgb = (1.0 - w) * base_frame.astype(np.float64) + w * colored
    out = np.empty((*overlay.shape, 4), dtype=np.uint8)
    out[..., :3] = np.floor(rgb + 0.5).astype(np.uint8)
    out[..., 3] = 255
    return out


def grid_payload(grid: CamGrid) -> list[float]:
    """Row-major flat float list of a grid, the wire form clients overlay from."""
    return [float(v) for v in grid.values.reshape(-1)]
