"""Shared tensor and raster primitives.

Conventions used across the package:

* image: uint8 array of shape (H, W, 3), RGB, row-major
* label map: integer array of shape (H, W)
* tensor: float32 array, channel-first, row-major (conv kernels OIHW)
"""

from __future__ import annotations

import numpy as np


def check_finite(arr, what="array"):
    """Raise if the array contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected uint8 (H, W, 3) image, got "
                         f"{img.dtype} {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("zero-sized image")
    return img


def _bilinear_axis(n_in, n_out):
    """Half-pixel-center sampling grid for one axis (align-corners false).

    Sample centers sit at (i + 0.5) * n_in / n_out - 0.5, clamped to the
    valid index range.
    """
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    lo0 = np.clip(lo, 0, n_in - 1)
    lo1 = np.clip(lo + 1, 0, n_in - 1)
    return lo0, lo1, frac


def resize_bilinear_f32(arr, out_h, out_w):
    """Bilinear resize of a float 2-D map to (out_h, out_w)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D map")
    h, w = arr.shape
    if h == 0 or w == 0:
        raise ValueError("zero-sized map")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    if (out_h, out_w) == (h, w):
        return arr.copy()
    y0, y1, ty = _bilinear_axis(h, out_h)
    x0, x1, tx = _bilinear_axis(w, out_w)
    ty = ty[:, None]
    tx = tx[None, :]
    top = arr[y0][:, x0] * (1 - tx) + arr[y0][:, x1] * tx
    bot = arr[y1][:, x0] * (1 - tx) + arr[y1][:, x1] * tx
    return top * (1 - ty) + bot * ty


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize of an RGB uint8 image (half-pixel-center convention).

    Values are rounded to nearest (ties to even) after interpolation.
    """
    img = check_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    if (out_h, out_w) == img.shape[:2]:
        return img.copy()
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    for ch in range(3):
        plane = resize_bilinear_f32(img[:, :, ch].astype(np.float64),
                                    out_h, out_w)
        out[:, :, ch] = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    return out


def upsample_nearest(labels, out_h, out_w):
    """Nearest-neighbour upsampling of a label map.

    Each output cell takes the label of the source cell closest to its
    center. Output dims must be >= the source dims, so no label can vanish.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("expected a 2-D label map")
    h, w = labels.shape
    if out_h < h or out_w < w:
        raise ValueError("upsample target must be >= source dims")
    ys = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64),
                    h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64),
                    w - 1)
    return labels[ys][:, xs].copy()


def normalize_to_input(img, mean, std):
    """Map a uint8 image to a (3, H, W) float32 tensor: (p/255 - mean) / std."""
    img = check_image(img)
    mean = np.asarray(mean, dtype=np.float32).reshape(3)
    std = np.asarray(std, dtype=np.float32).reshape(3)
    if np.any(std <= 0):
        raise ValueError("std must be strictly positive per channel")
    x = img.astype(np.float32) / 255.0
    x = (x - mean[None, None, :]) / std[None, None, :]
    return np.ascontiguousarray(x.transpose(2, 0, 1))
