"""Reader and writer for the block-classifier interchange directory.

A model is a directory holding a line-oriented ``manifest.txt`` plus one
headerless little-endian float32 file per tensor. The grammar:

    format 1
    input_size <N>
    class <i> <name, may contain spaces>
    block <index> <stage> <in_ch> <out_ch> <stride> <prunable>
    tensor <name> <d0>x<d1>x...x<dk> <file>

Every conv/norm unit contributes five tensors (``<prefix>.conv.weight``
and ``<prefix>.norm.{scale,shift,mean,var}``); the stem is present iff
``stem.conv.weight`` is, and the affine head is ``head.weight`` plus
``head.bias``. This module is deliberately self-contained so the exporter
shares no code with the consumer it feeds.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class BlockSpec:
    index: int
    stage: int
    in_channels: int
    out_channels: int
    stride: int
    prunable: bool


@dataclass
class ModelSpec:
    input_size: int
    class_names: list[str]
    blocks: list[BlockSpec]


def unit_tensor_names(prefix):
    """The five tensor names a conv/norm unit contributes, in order."""
    return [f"{prefix}.conv.weight", f"{prefix}.norm.scale",
            f"{prefix}.norm.shift", f"{prefix}.norm.mean",
            f"{prefix}.norm.var"]


def write_interchange(out_dir, spec, tensors):
    """Write a manifest plus tensor files; ``tensors`` order is kept."""
    os.makedirs(out_dir, exist_ok=True)
    lines = ["format 1", f"input_size {spec.input_size}"]
    for i, name in enumerate(spec.class_names):
        lines.append(f"class {i} {name}")
    for blk in spec.blocks:
        lines.append(f"block {blk.index} {blk.stage} {blk.in_channels} "
                     f"{blk.out_channels} {blk.stride} "
                     f"{1 if blk.prunable else 0}")
    for name, arr in tensors.items():
        dims = "x".join(str(d) for d in arr.shape)
        fname = name + ".bin"
        lines.append(f"tensor {name} {dims} {fname}")
        with open(os.path.join(out_dir, fname), "wb") as fh:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_interchange(model_dir):
    """Parse a model directory back into (ModelSpec, {name: array})."""
    manifest = os.path.join(model_dir, "manifest.txt")
    if not os.path.isfile(manifest):
        raise ValueError(f"manifest not found: {manifest}")
    with open(manifest, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "format 1":
        raise ValueError("manifest must start with 'format 1'")
    input_size = None
    classes = {}
    blocks = []
    tensors = {}
    for ln in lines[1:]:
        kind, rest = ln.split(None, 1)
        if kind == "input_size":
            input_size = int(rest)
        elif kind == "class":
            idx, name = rest.split(None, 1)
            classes[int(idx)] = name.strip()
        elif kind == "block":
            vals = [int(v) for v in rest.split()]
            if len(vals) != 6:
                raise ValueError(f"malformed block record: {ln}")
            blocks.append(BlockSpec(vals[0], vals[1], vals[2], vals[3],
                                    vals[4], bool(vals[5])))
        elif kind == "tensor":
            name, dims, fname = rest.split()
            dims = tuple(int(d) for d in dims.split("x"))
            path = os.path.join(model_dir, fname)
            with open(path, "rb") as fh:
                raw = fh.read()
            if len(raw) != 4 * int(np.prod(dims)):
                raise ValueError(f"tensor {name}: file size does not match "
                                 f"declared dims {dims}")
            # copy: frombuffer views are read-only and torch rejects those
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        else:
            raise ValueError(f"unknown manifest record: {ln}")
    if input_size is None:
        raise ValueError("manifest missing input_size")
    if sorted(classes) != list(range(len(classes))):
        raise ValueError("class indices must be contiguous from 0")
    names = [classes[i] for i in range(len(classes))]
    return ModelSpec(input_size, names, blocks), tensors
