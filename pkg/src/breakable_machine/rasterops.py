"""Image plumbing: align-corners bilinear resize and JPEG/PNG codecs.

Rasters are numpy arrays, (H, W) or (H, W, C); decoded camera frames are
uint8 RGB. All resampling in the package goes through resize_bilinear so
the interpolation convention is defined in exactly one place.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resample of (H, W) or (H, W, C) float arrays.

    Source coordinate for output index i is i*(in-1)/(out-1); a size-1
    output samples index 0. Output values stay inside the input's range.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    in_h, in_w = img.shape[:2]
    if in_h < 1 or in_w < 1:
        raise ValueError("input dimensions must be positive")
    ys = np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0).astype(img.dtype if img.dtype.kind == "f" else np.float64)
    fx = (xs - x0).astype(fy.dtype)
    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    top = a * (1 - fx) + b * fx
    bot = c * (1 - fx) + d * fx
    return top * (1 - fy) + bot * fy


def thumbnail(rgb: np.ndarray, max_side: int = 112) -> np.ndarray:
    """Downscales a uint8 RGB raster so its longer side is <= max_side."""
    h, w = rgb.shape[:2]
    scale = max_side / max(h, w)
    if scale >= 1.0:
        return rgb.copy()
    out_h = max(1, round(h * scale))
    out_w = max(1, round(w * scale))
    small = resize_bilinear(rgb.astype(np.float32), out_h, out_w)
    return np.clip(np.floor(small + 0.5), 0, 255).astype(np.uint8)


def decode_image(data: bytes) -> np.ndarray:
    """Decodes JPEG/PNG bytes to a uint8 RGB array. Raises ValueError if undecodable."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"undecodable image: {exc}") from exc


def encode_jpeg(rgb: np.ndarray, quality: int = 88) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb), mode="RGB").save(buf, "JPEG", quality=quality)
    return buf.getvalue()


def encode_png_rgba(rgba: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgba), mode="RGBA").save(buf, "PNG")
    return buf.getvalue()
