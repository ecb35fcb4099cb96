"""Synthetic image generators used by the test suite and benchmarks.

Two families: a shape/color classification set (colored squares and disks
on a dark noisy ground) for exercising training and pruning, and a
multi-item composite set (vertical strips of textured "ingredient" fills)
for exercising segmentation, localization, and fusion end to end. All
generators are deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

SHAPE_COLORS = {
    "red": (200, 40, 40),
    "green": (40, 190, 50),
    "blue": (45, 80, 215),
    "yellow": (220, 200, 45),
}
SHAPES = ("square", "disk")

INGREDIENT_COLORS = {
    "tomato": (215, 55, 40),
    "lettuce": (80, 195, 70),
    "cheese": (245, 210, 90),
    "bread": (200, 150, 95),
    "meat": (150, 75, 60),
    "olive": (75, 85, 40),
    "onion": (225, 205, 190),
    "blueberry": (70, 65, 170),
}

BACKGROUND_LEVEL = 16


def shape_class_names():
    """The 8 shape/color class names plus 'background'."""
    names = [f"{color}-{shape}" for color in SHAPE_COLORS
             for shape in SHAPES]
    return names + ["background"]


def _ground(size, rng):
    img = rng.normal(BACKGROUND_LEVEL, 6.0, size=(size, size, 3))
    return np.clip(img, 0, 255)


def _draw_shape(img, shape, color, rng):
    size = img.shape[0]
    c = np.asarray(color, dtype=np.float64) \
        + rng.normal(0.0, 12.0, size=3)
    cy = size / 2 + rng.uniform(-6, 6)
    cx = size / 2 + rng.uniform(-6, 6)
    half = size * 0.25 + rng.uniform(-4, 4)
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "square":
        inside = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
    else:
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= half * half
    img[inside] = c
    return img


def shape_sample(class_name, rng, size=64):
    """One (size, size, 3) uint8 image of the given shape class."""
    img = _ground(size, rng)
    if class_name != "background":
        color_name, shape = class_name.rsplit("-", 1)
        img = _draw_shape(img, shape, SHAPE_COLORS[color_name], rng)
    img += rng.normal(0.0, 7.0, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def shape_dataset(n_per_class, seed=0, size=64):
    """Balanced list of (image, class name) pairs, shuffled."""
    rng = np.random.default_rng(seed)
    names = shape_class_names()
    pairs = [(shape_sample(name, rng, size), name)
             for name in names for _ in range(n_per_class)]
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


# ---------------------------------------------------------------------------
# multi-item composites

def ingredient_class_names():
    """The 8 ingredient fill names plus 'background'."""
    return sorted(INGREDIENT_COLORS) + ["background"]


def ingredient_patch(name, height, width, rng):
    """A (height, width, 3) float64 textured fill for one ingredient."""
    if name == "background":
        return _ground_patch(height, width, rng)
    base = np.asarray(INGREDIENT_COLORS[name], dtype=np.float64)
    patch = np.empty((height, width, 3), dtype=np.float64)
    patch[:] = base + rng.normal(0.0, 8.0, size=3)
    patch += rng.normal(0.0, 9.0, size=patch.shape)
    return np.clip(patch, 0, 255)


def _ground_patch(height, width, rng):
    return np.clip(rng.normal(BACKGROUND_LEVEL, 6.0,
                              size=(height, width, 3)), 0, 255)


def ingredient_sample(name, rng, size=32):
    """One uint8 training crop of a single ingredient fill."""
    return ingredient_patch(name, size, size, rng).astype(np.uint8)


def _mask_band(img, rng):
    """Black out a random band along one side, like a segment mask would."""
    out = img.copy()
    size = img.shape[0]
    width = int(rng.integers(size // 4, size // 2 + 1))
    side = int(rng.integers(4))
    if side == 0:
        out[:, :width] = 0
    elif side == 1:
        out[:, size - width:] = 0
    elif side == 2:
        out[:width, :] = 0
    else:
        out[size - width:, :] = 0
    return out


def ingredient_crop_dataset(n_per_class, seed=0, size=32):
    """Balanced single-ingredient crops for training the item classifier.

    Half of each class's crops have one side blacked out, matching what the
    classifier sees on masked segment images; a third of the background
    crops are fully black, matching mask fill.
    """
    rng = np.random.default_rng(seed)
    names = ingredient_class_names()
    pairs = []
    for name in names:
        for i in range(n_per_class):
            img = ingredient_sample(name, rng, size)
            if name == "background" and i % 3 == 2:
                img = np.zeros_like(img)
            elif i % 2 == 1:
                img = _mask_band(img, rng)
            pairs.append((img, name))
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


def composite_image(labels, rng, size=120):
    """Vertical strips of the given ingredient fills, left to right."""
    if not labels:
        raise ValueError("composite needs at least one label")
    img = np.empty((size, size, 3), dtype=np.float64)
    n = len(labels)
    edges = [round(i * size / n) for i in range(n + 1)]
    for i, name in enumerate(labels):
        left, right = edges[i], edges[i + 1]
        img[:, left:right] = ingredient_patch(name, size, right - left, rng)
    return np.clip(img, 0, 255).astype(np.uint8)


def composite_dataset(n_images, seed=0, size=120, items=(2, 3)):
    """List of (image, true label set) multi-item samples.

    Each image holds 2 or 3 distinct ingredient strips chosen uniformly.
    """
    rng = np.random.default_rng(seed)
    names = sorted(INGREDIENT_COLORS)
    out = []
    for _ in range(n_images):
        count = int(rng.choice(items))
        chosen = list(rng.choice(names, size=count, replace=False))
        out.append((composite_image(chosen, rng, size), set(chosen)))
    return out
