"""Region extraction from binary masks.

Masks coming out of segmentation are speckled: morphological opening
(erode then dilate with a square structuring element) scrubs the speckle,
connected-component labelling splits what remains into regions, and each
region's bounding box becomes a candidate crop. A fixed 3x3 grid of
sliding windows complements the boxes so small items that morphology
swallows still get looked at.
"""

from __future__ import annotations

import numpy as np

from . import backend

MIN_AREA_FRACTION = 0.01


def _check_mask(mask):
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    return m.astype(bool)


def _padded_windows(mask, size):
    h, w = mask.shape
    half = size // 2
    padded = np.zeros((h + size - 1, w + size - 1), dtype=bool)
    padded[half:half + h, half:half + w] = mask
    return np.lib.stride_tricks.sliding_window_view(padded, (size, size))


def _window_all(mask, size):
    """For every pixel: do all pixels of the size x size window centred on
    it lie inside the mask? Out-of-bounds counts as background."""
    return _padded_windows(mask, size).all(axis=(2, 3))


def _window_any(mask, size):
    """For every pixel: does the size x size window centred on it touch the
    mask anywhere? Out-of-bounds contributes nothing."""
    return _padded_windows(mask, size).any(axis=(2, 3))


def erode(mask, size=3):
    """Binary erosion with a square structuring element.

    Pixels whose window pokes past the border are removed (out-of-bounds is
    treated as background).
    """
    if size < 1 or size % 2 == 0:
        raise ValueError("structuring element size must be odd and >= 1")
    m = _check_mask(mask)
    if size == 1:
        return m.copy()
    return _window_all(m, size)


def dilate(mask, size=3):
    """Binary dilation with a square structuring element.

    A pixel turns on when its window touches any mask pixel; pixels outside
    the image never contribute, so dilation cannot grow past the content.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError("structuring element size must be odd and >= 1")
    m = _check_mask(mask)
    if size == 1:
        return m.copy()
    return _window_any(m, size)


def open_mask(mask, size=3):
    """Erosion followed by dilation; removes islands smaller than the SE."""
    return dilate(erode(mask, size), size)


def connected_components(mask):
    """Label 8-connected foreground regions.

    Returns (labels, count) where labels is int32 with background 0 and
    regions numbered 1..count in order of first encounter in row-major scan.
    """
    return backend.label_components(_check_mask(mask))


def component_boxes(labels, count):
    """Tight (top, left, height, width) box of each labelled region."""
    boxes = []
    for lab in range(1, count + 1):
        rows, cols = np.nonzero(labels == lab)
        top = int(rows.min())
        left = int(cols.min())
        boxes.append((top, left,
                      int(rows.max()) - top + 1,
                      int(cols.max()) - left + 1))
    return boxes


def locate_regions(mask, se_size=3, min_area_fraction=MIN_AREA_FRACTION):
    """Bounding boxes of the significant regions of a mask.

    The mask is opened with a square SE, split into 8-connected components,
    and boxes whose component area is below ``min_area_fraction`` of the
    mask area are dropped. Box order follows component discovery order.
    """
    m = _check_mask(mask)
    cleaned = open_mask(m, se_size)
    labels, count = connected_components(cleaned)
    min_area = min_area_fraction * m.size
    boxes = []
    for lab in range(1, count + 1):
        area = int((labels == lab).sum())
        if area < min_area:
            continue
        rows, cols = np.nonzero(labels == lab)
        top = int(rows.min())
        left = int(cols.min())
        boxes.append((top, left,
                      int(rows.max()) - top + 1,
                      int(cols.max()) - left + 1))
    return boxes


def sliding_windows(height, width):
    """The fixed 3x3 grid of window boxes for an image of the given size.

    Each window is floor(H/3) x floor(W/3); offsets step by the window size,
    so the nine boxes tile the image from the top-left corner (remainder
    rows/columns on the bottom/right edges are not covered).
    """
    if height < 3 or width < 3:
        raise ValueError("image must be at least 3x3 for sliding windows")
    wh = height // 3
    ww = width // 3
    return [(r * wh, c * ww, wh, ww)
            for r in range(3) for c in range(3)]


def crop(img, box):
    """Extract the (top, left, height, width) region of an image."""
    top, left, h, w = box
    if h < 1 or w < 1:
        raise ValueError("empty crop box")
    if top < 0 or left < 0 or top + h > img.shape[0] \
            or left + w > img.shape[1]:
        raise ValueError(f"box {box} exceeds image bounds {img.shape[:2]}")
    return img[top:top + h, left:left + w]
