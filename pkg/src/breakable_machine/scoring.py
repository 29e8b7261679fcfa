"""Glue between the session layer and the numeric core."""

from __future__ import annotations

import numpy as np

from .cam import compute_cam, normalize_cam, render_heatmap, upsample_bilinear
from .nn import Model, forward, preprocess
from .rasterops import encode_png_rgba
from .session import Score

HEATMAP_ALPHA = 0.85


class ModelScorer:
    """Scores submitted frames against one loaded model.

    Returns the softmax probability of the challenge label, plus the
    normalized CAM grid and a rendered overlay PNG when heatmaps are on.
    The model is immutable, so concurrent calls are safe.
    """

    def __init__(self, model: Model):
        self.model = model

    def __call__(self, frame: np.ndarray, label_index: int, want_heatmap: bool) -> Score:
        result = forward(self.model, preprocess(frame, self.model.input_size))
        confidence = float(result.probs[label_index])
        if not want_heatmap:
            return Score(confidence=confidence)
        grid = normalize_cam(
            compute_cam(result.feature_maps, self.model.head_weights, label_index)
        )
        png = None
        if frame.shape[0] >= grid.values.shape[0] and frame.shape[1] >= grid.values.shape[1]:
            overlay = upsample_bilinear(grid, frame.shape[0], frame.shape[1])
            png = encode_png_rgba(render_heatmap(overlay, frame, HEATMAP_ALPHA))
        return Score(confidence=confidence, cam_grid=grid.values, heatmap_png=png)
