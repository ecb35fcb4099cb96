"""Feature-map segmentation by pixel-wise clustering.

The deepest feature map of the classifier assigns every spatial cell a
C-dimensional activation vector. Clustering those vectors with k-means
carves the image into regions that the network already treats as distinct,
without any extra training. Cluster labels are upsampled back to image
resolution and turned into masked copies of the original image, one per
cluster.
"""

from __future__ import annotations

import numpy as np

from . import refnet
from .numerics import check_finite, upsample_nearest

FILL_COLOR = (0, 0, 0)


def _kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c] = points[int(rng.integers(n))]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r))
            idx = min(idx, n - 1)
            centroids[c] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k, seed=0, max_iter=100, tol=1e-6):
    """Lloyd's k-means with k-means++ seeding.

    An empty cluster is repaired by re-seeding it with the point farthest
    from its currently assigned centroid. Returns (assignments, centroids).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be (N, D)")
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(pts, k, rng)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        # a stolen point must not be stolen twice within one repair pass
        dist_own = d2[np.arange(n), assign].copy()
        moved = 0.0
        for c in range(k):
            members = pts[assign == c]
            if len(members) == 0:
                far = int(dist_own.argmax())
                new_c = pts[far]
                assign[far] = c
                dist_own[far] = -np.inf
            else:
                new_c = members.mean(axis=0)
            moved = max(moved, float(((centroids[c] - new_c) ** 2).sum()))
            centroids[c] = new_c
        if moved <= tol * tol:
            break
    return assign, centroids


def cluster_feature_map(feature_map, k, seed=0):
    """Cluster a (C, H, W) tensor per pixel; returns an (H, W) label grid."""
    fm = np.asarray(feature_map, dtype=np.float32)
    if fm.ndim != 3:
        raise ValueError(f"expected (C, H, W) feature map, got {fm.shape}")
    c, h, w = fm.shape
    points = fm.reshape(c, h * w).T
    assign, _ = kmeans(points, k, seed=seed)
    return assign.reshape(h, w).astype(np.int64)


def masks_from_labels(labels, k, out_h, out_w):
    """Upsample a label grid and split it into k boolean masks."""
    lab = upsample_nearest(np.asarray(labels, dtype=np.int64), out_h, out_w)
    return [(lab == c) for c in range(k)]


def apply_mask(img, mask, fill=FILL_COLOR):
    """Copy of an RGB image with everything outside the mask filled."""
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image "
                         f"{img.shape[:2]}")
    out = np.empty_like(img)
    out[:] = np.asarray(fill, dtype=np.uint8)
    out[mask] = img[mask]
    return out


def segment_image(model, img, k, seed=0):
    """Split an image into k segments guided by the deepest feature map.

    Returns a list of k (mask, segment_image) pairs in cluster-label order,
    where each mask is a boolean (H, W) array at the original resolution and
    the segment image keeps the original pixels inside the mask.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = refnet.preprocess(img, model.input_size)
    fm = refnet.block_feature_maps(model, x)[-1]
    check_finite(fm, "deep feature map")
    cells = fm.shape[1] * fm.shape[2]
    if k > cells:
        raise ValueError(f"k={k} exceeds the {cells} spatial cells of the "
                         "deepest feature map")
    labels = cluster_feature_map(fm, k, seed=seed)
    h, w = img.shape[:2]
    masks = masks_from_labels(labels, k, h, w)
    return [(m, apply_mask(img, m)) for m in masks]
