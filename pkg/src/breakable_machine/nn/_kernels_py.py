"""NumPy fallback kernels; same contracts as the compiled extension."""

from __future__ import annotations

import numpy as np


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
           stride: int, padding: int, groups: int) -> np.ndarray:
    """Grouped 2D convolution via im2col + matmul.

    x [C_in, H, W] float32, weight [C_out, C_in/groups, kh, kw], bias [C_out].
    Returns [C_out, H_out, W_out] float32.
    """
    c_in, in_h, in_w = x.shape
    c_out, cpg, kh, kw = weight.shape
    out_h = (in_h + 2 * padding - kh) // stride + 1
    out_w = (in_w + 2 * padding - kw) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    # Gather kernel taps: cols[c, ky, kx, oy, ox]
    cols = np.empty((c_in, kh, kw, out_h, out_w), dtype=np.float32)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = x[:, ky : ky + out_h * stride : stride,
                                kx : kx + out_w * stride : stride]
    cols = cols.reshape(groups, cpg * kh * kw, out_h * out_w)
    w2 = weight.reshape(groups, c_out // groups, cpg * kh * kw)
    out = np.matmul(w2, cols).reshape(c_out, out_h, out_w)
    out += bias[:, None, None]
    return out


def relu6(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 6.0)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """[C, H, W] -> [C] spatial mean, accumulated in float64."""
    return x.mean(axis=(1, 2), dtype=np.float64).astype(np.float32)
