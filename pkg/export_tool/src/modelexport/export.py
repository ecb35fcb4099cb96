"""Convert a torch module into interchange records.

The walker understands one vocabulary: an optional stem unit, a list of
block units, and a linear head. A unit is anything exposing ``.conv``
(3x3 Conv2d, padding 1, no bias) and ``.norm`` (BatchNorm2d), or an
``nn.Sequential`` whose first two entries are such layers. Anything else
is a hard error naming the offending layer, and nothing is written until
the whole model has validated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from torch import nn

from .interchange import (BlockSpec, ModelSpec, unit_tensor_names,
                          write_interchange)


class ExportError(ValueError):
    """A model that cannot be represented in the interchange vocabulary."""


@dataclass
class ExportBundle:
    directory: str
    spec: ModelSpec
    probe: object = field(default=None)


def _type_name(obj):
    return type(obj).__name__


def _unit_parts(obj, where):
    if hasattr(obj, "conv") and hasattr(obj, "norm"):
        return obj.conv, obj.norm
    if isinstance(obj, nn.Sequential) and len(obj) >= 2:
        return obj[0], obj[1]
    raise ExportError(f"{where}: layer not representable: "
                      f"{_type_name(obj)} (need a conv/norm unit)")


def _check_conv(conv, where):
    if not isinstance(conv, nn.Conv2d):
        raise ExportError(f"{where}: layer not representable: "
                          f"{_type_name(conv)} (expected Conv2d)")
    if tuple(conv.kernel_size) != (3, 3):
        raise ExportError(f"{where}: kernel {tuple(conv.kernel_size)} "
                          "unsupported, the format is 3x3 only")
    if tuple(conv.padding) != (1, 1) or tuple(conv.dilation) != (1, 1) \
            or conv.groups != 1:
        raise ExportError(f"{where}: conv must use padding 1, dilation 1, "
                          "groups 1")
    if conv.bias is not None:
        raise ExportError(f"{where}: conv bias is not representable")
    stride = tuple(conv.stride)
    if stride[0] != stride[1] or stride[0] not in (1, 2):
        raise ExportError(f"{where}: stride {stride} unsupported")
    return conv.in_channels, conv.out_channels, stride[0]


def _check_norm(norm, out_channels, where):
    if not isinstance(norm, nn.BatchNorm2d):
        raise ExportError(f"{where}: layer not representable: "
                          f"{_type_name(norm)} (expected BatchNorm2d)")
    if norm.num_features != out_channels:
        raise ExportError(f"{where}: norm width {norm.num_features} does "
                          f"not match conv output {out_channels}")
    if norm.weight is None or norm.running_mean is None:
        raise ExportError(f"{where}: norm must be affine with tracked "
                          "running statistics")


def _unit_tensors(prefix, conv, norm):
    arrays = (conv.weight, norm.weight, norm.bias, norm.running_mean,
              norm.running_var)
    return {name: arr.detach().cpu().numpy().astype(np.float32)
            for name, arr in zip(unit_tensor_names(prefix), arrays)}


def collect(module, class_names, input_size):
    """Validate a torch module and return (ModelSpec, tensor dict)."""
    names = [str(n).strip() for n in class_names]
    if not names or any(not n or "\n" in n for n in names):
        raise ExportError("class names must be non-empty single lines")
    if names.count("background") != 1:
        raise ExportError("class names must contain exactly one "
                          "'background'")
    if int(input_size) < 1:
        raise ExportError(f"input size {input_size} must be >= 1")
    if not hasattr(module, "blocks") or not hasattr(module, "head"):
        raise ExportError("model does not expose blocks and head")

    tensors = {}
    prev = 3
    stem = getattr(module, "stem", None)
    if stem is not None:
        conv, norm = _unit_parts(stem, "stem")
        in_ch, out_ch, stride = _check_conv(conv, "stem")
        _check_norm(norm, out_ch, "stem")
        if in_ch != 3:
            raise ExportError(f"stem takes {in_ch} channels, expected 3")
        if stride != 2:
            raise ExportError("stem conv must have stride 2")
        tensors.update(_unit_tensors("stem", conv, norm))
        prev = out_ch

    blocks = []
    stage = -1
    for i, blk in enumerate(module.blocks):
        where = f"blocks[{i}]"
        conv, norm = _unit_parts(blk, where)
        in_ch, out_ch, stride = _check_conv(conv, where)
        _check_norm(norm, out_ch, where)
        if in_ch != prev:
            raise ExportError(f"{where}: takes {in_ch} channels but the "
                              f"previous layer produces {prev}")
        preserving = in_ch == out_ch and stride == 1
        if not preserving:
            stage += 1    # a width or resolution change opens a new stage
        blocks.append(BlockSpec(i, max(stage, 0), in_ch, out_ch, stride,
                                preserving))
        tensors.update(_unit_tensors(f"block.{i}", conv, norm))
        prev = out_ch

    head = module.head
    if not isinstance(head, nn.Linear):
        raise ExportError(f"head: layer not representable: "
                          f"{_type_name(head)} (expected Linear)")
    if head.in_features != prev:
        raise ExportError(f"head expects {head.in_features} features but "
                          f"the blocks produce {prev}")
    if head.out_features != len(names):
        raise ExportError(f"head has {head.out_features} outputs for "
                          f"{len(names)} class names")
    tensors["head.weight"] = head.weight.detach().cpu().numpy() \
        .astype(np.float32)
    tensors["head.bias"] = (np.zeros(len(names), np.float32)
                            if head.bias is None else
                            head.bias.detach().cpu().numpy()
                            .astype(np.float32))
    return ModelSpec(int(input_size), names, blocks), tensors


def export_model(module, class_names, input_size, out_dir):
    """Validate, then write the interchange directory in one pass."""
    spec, tensors = collect(module, class_names, input_size)
    write_interchange(out_dir, spec, tensors)
    return ExportBundle(out_dir, spec)
