"""Raster codecs: 8-bit RGB PNG and binary PPM (P6).

These two formats are the only ones the toolkit reads or writes. PNG goes
through Pillow; PPM is written and parsed here so the byte layout stays
explicit.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .numerics import check_image

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def read_image(path):
    """Read a PNG or binary PPM file into a uint8 (H, W, 3) array."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_PNG_MAGIC):
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    if head.startswith(b"P6"):
        return _read_ppm(path)
    raise ValueError(f"unsupported image format (need PNG or P6 PPM): {path}")


def write_image(path, img):
    """Write an image as PNG or PPM depending on the file extension."""
    img = check_image(img)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        Image.fromarray(img, mode="RGB").save(path, format="PNG")
    elif ext in (".ppm", ".pnm"):
        _write_ppm(path, img)
    else:
        raise ValueError(f"unsupported image extension {ext!r} "
                         "(use .png or .ppm)")


def _read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 2  # past the "P6" magic
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":            # comment runs to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise ValueError(f"malformed PPM header: {path}")
    if maxval != 255:
        raise ValueError(f"only 8-bit PPM supported (maxval 255): {path}")
    need = w * h * 3
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise ValueError(f"PPM pixel data truncated: {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def _write_ppm(path, img):
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def draw_rectangles(img, boxes, color=(255, 0, 0), thickness=2):
    """Return a copy of the image with box outlines drawn on it.

    ``boxes`` is an iterable of (top, left, height, width) tuples.
    """
    out = check_image(img).copy()
    h, w = out.shape[:2]
    col = np.asarray(color, dtype=np.uint8)
    for top, left, bh, bw in boxes:
        bot = min(top + bh, h)
        right = min(left + bw, w)
        t0 = max(top, 0)
        l0 = max(left, 0)
        for k in range(thickness):
            if top + k < h:
                out[min(max(top + k, 0), h - 1), l0:right] = col
            if bot - 1 - k >= 0:
                out[max(bot - 1 - k, 0), l0:right] = col
            if left + k < w:
                out[t0:bot, min(max(left + k, 0), w - 1)] = col
            if right - 1 - k >= 0:
                out[t0:bot, max(right - 1 - k, 0)] = col
    return out
