"""Probe recording for cross-implementation parity checks.

A probe is the exact network input plus the probability vector the source
model produced for it. The image is stored already resized to the model
input, as raw interleaved RGB bytes (``probe.bin``), so a consumer needs
no resampling step of its own; the expected vector is one float per line
in ``probe_expected.txt``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .torchnet import probabilities

PROBE_IMAGE = "probe.bin"
PROBE_EXPECTED = "probe_expected.txt"


@dataclass
class ProbeRecord:
    image: np.ndarray          # uint8 (S, S, 3)
    expected: np.ndarray       # float64 (classes,)


def load_rgb(path):
    with Image.open(path) as im:
        # np.array copies; PIL-backed views are read-only and torch
        # refuses to wrap those
        return np.array(im.convert("RGB"), dtype=np.uint8)


def prepare(image, input_size):
    """Resize an RGB uint8 image to the model input if necessary."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("probe image must be uint8 (H, W, 3)")
    if image.shape[:2] != (input_size, input_size):
        pil = Image.fromarray(image, mode="RGB")
        pil = pil.resize((input_size, input_size), Image.BILINEAR)
        image = np.array(pil, dtype=np.uint8)
    return image


def normalize(image):
    """(1, 3, S, S) float32 input tensor: (p/255 - 0.5) / 0.5 per channel."""
    x = torch.from_numpy(np.ascontiguousarray(image)).float() / 255.0
    x = (x - 0.5) / 0.5
    return x.permute(2, 0, 1).unsqueeze(0)


def expected_vector(module, image):
    return probabilities(module, normalize(image))


def record_probe(module, image, input_size, out_dir):
    """Run the probe and write ``probe.bin`` + ``probe_expected.txt``."""
    image = prepare(image, input_size)
    vec = expected_vector(module, image)
    if abs(float(vec.sum()) - 1.0) > 1e-5:
        raise ValueError(f"probe vector sums to {vec.sum():.8f}, not 1")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, PROBE_IMAGE), "wb") as fh:
        fh.write(np.ascontiguousarray(image).tobytes())
    with open(os.path.join(out_dir, PROBE_EXPECTED), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(f"{v:.9e}" for v in vec) + "\n")
    return ProbeRecord(image, vec)


def read_probe(out_dir, input_size):
    """Load a recorded probe back as a ProbeRecord."""
    with open(os.path.join(out_dir, PROBE_IMAGE), "rb") as fh:
        raw = fh.read()
    want = input_size * input_size * 3
    if len(raw) != want:
        raise ValueError(f"probe image holds {len(raw)} bytes, "
                         f"expected {want}")
    image = np.frombuffer(raw, dtype=np.uint8) \
        .reshape(input_size, input_size, 3).copy()
    with open(os.path.join(out_dir, PROBE_EXPECTED), encoding="utf-8") as fh:
        expected = np.array([float(ln) for ln in fh if ln.strip()],
                            dtype=np.float64)
    return ProbeRecord(image, expected)
