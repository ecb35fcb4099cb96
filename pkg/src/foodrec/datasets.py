"""Dataset ingestion.

Two on-disk layouts are understood. Single-label: one subdirectory per
class, images inside. Multi-label: a flat directory of images where every
image has a `<image>.labels` sidecar holding one class name per line; an
optional `<image>.k` sidecar holds the segment count for that image.
Enumeration is sorted so an index is stable across file systems.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .raster_io import read_image

IMAGE_EXTS = (".png", ".ppm", ".pnm")


@dataclass
class Entry:
    path: str
    labels: list[str]      # one element in single-label mode
    k: int | None = None


@dataclass
class DatasetIndex:
    mode: str              # "single" or "multi"
    entries: list[Entry]

    def __len__(self):
        return len(self.entries)


def _is_image(name):
    return name.lower().endswith(IMAGE_EXTS)


def _read_sidecar_labels(path):
    with open(path, encoding="utf-8") as fh:
        labels = [ln.strip() for ln in fh if ln.strip()]
    if not labels:
        raise ValueError(f"empty label sidecar: {path}")
    return labels


def _read_sidecar_k(img_path):
    side = img_path + ".k"
    if not os.path.isfile(side):
        return None
    with open(side, encoding="utf-8") as fh:
        text = fh.read().strip()
    try:
        k = int(text)
    except ValueError:
        raise ValueError(f"sidecar {side} must hold a single integer, "
                         f"got {text!r}") from None
    if k < 1:
        raise ValueError(f"sidecar {side}: k must be >= 1")
    return k


def ingest(root, mode, class_names=None):
    """Build a DatasetIndex from a directory tree.

    ``mode`` is "single" (directory-per-class) or "multi" (flat images with
    `.labels` sidecars). When ``class_names`` is given, any label outside it
    is a hard error naming the file and the label.
    """
    if mode not in ("single", "multi"):
        raise ValueError("mode must be 'single' or 'multi'")
    if not os.path.isdir(root):
        raise ValueError(f"dataset root not found: {root}")
    known = set(class_names) if class_names is not None else None
    entries = []
    if mode == "single":
        for class_dir in sorted(os.listdir(root)):
            full = os.path.join(root, class_dir)
            if not os.path.isdir(full):
                continue
            if known is not None and class_dir not in known:
                raise ValueError(f"directory {full}: unknown class "
                                 f"{class_dir!r}")
            for name in sorted(os.listdir(full)):
                if _is_image(name):
                    path = os.path.join(full, name)
                    entries.append(Entry(path, [class_dir],
                                         _read_sidecar_k(path)))
    else:
        for name in sorted(os.listdir(root)):
            if not _is_image(name):
                continue
            path = os.path.join(root, name)
            sidecar = path + ".labels"
            if not os.path.isfile(sidecar):
                raise ValueError(f"missing label sidecar for {path}")
            labels = _read_sidecar_labels(sidecar)
            if known is not None:
                for label in labels:
                    if label not in known:
                        raise ValueError(f"sidecar {sidecar}: unknown "
                                         f"label {label!r}")
            entries.append(Entry(path, labels, _read_sidecar_k(path)))
    return DatasetIndex(mode, entries)


def load_pairs(index):
    """Materialize a single-label index as (image, class name) pairs."""
    if index.mode != "single":
        raise ValueError("load_pairs needs a single-label index")
    return [(read_image(e.path), e.labels[0]) for e in index.entries]


def write_single_label(pairs, root, writer):
    """Write (image, class) pairs into the directory-per-class layout.

    ``writer`` is raster_io.write_image or a stand-in; files are numbered
    in order within each class.
    """
    counters = {}
    for img, label in pairs:
        d = os.path.join(root, label)
        os.makedirs(d, exist_ok=True)
        n = counters.get(label, 0)
        counters[label] = n + 1
        writer(os.path.join(d, f"{n:04d}.png"), img)


def write_multi_label(samples, root, writer, k=None):
    """Write (image, label set) samples into the sidecar layout."""
    os.makedirs(root, exist_ok=True)
    for i, (img, labels) in enumerate(samples):
        path = os.path.join(root, f"{i:04d}.png")
        writer(path, img)
        with open(path + ".labels", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("\n".join(sorted(labels)) + "\n")
        if k is not None:
            with open(path + ".k", "w", encoding="utf-8",
                      newline="\n") as fh:
                fh.write(f"{k}\n")
