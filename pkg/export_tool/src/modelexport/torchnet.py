"""Reference torch implementation of the block classifier.

Semantics mirror the interchange consumer: strided 3x3 stem, blocks of
``relu(norm(conv(x)))`` with a residual add exactly when the block
preserves its input shape, global average pooling, affine head, and a
float64 softmax for probabilities. ``import_interchange`` rebuilds one of
these networks from a saved model directory.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .interchange import read_interchange, unit_tensor_names


class ConvNormUnit(nn.Module):
    def __init__(self, in_ch, out_ch, stride):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1,
                              bias=False)
        self.norm = nn.BatchNorm2d(out_ch)


class BlockNet(nn.Module):
    """Block classifier assembled from an explicit layer layout.

    ``layout`` is a list of (in_channels, out_channels, stride) triples;
    ``stem_channels`` of None builds a stemless network fed directly with
    the 3 input channels.
    """

    def __init__(self, class_names, input_size, stem_channels, layout):
        super().__init__()
        self.class_names = list(class_names)
        self.input_size = int(input_size)
        self.stem = (None if stem_channels is None
                     else ConvNormUnit(3, stem_channels, 2))
        self.blocks = nn.ModuleList(
            ConvNormUnit(i, o, s) for i, o, s in layout)
        prev = layout[-1][1] if layout else (stem_channels or 3)
        self.head = nn.Linear(prev, len(class_names))

    def forward(self, x):
        if self.stem is not None:
            x = torch.relu(self.stem.norm(self.stem.conv(x)))
        for blk in self.blocks:
            y = torch.relu(blk.norm(blk.conv(x)))
            x = x + y if y.shape == x.shape else y
        return self.head(x.mean(dim=(2, 3)))


def build_blocknet(class_names, input_size=64, stem_channels=8,
                   stage_widths=(16, 32, 64, 128), blocks_per_stage=3):
    """Staged layout: first block per stage downsamples and changes width."""
    layout = []
    prev = stem_channels
    for width in stage_widths:
        for k in range(blocks_per_stage):
            layout.append((prev, width, 2 if k == 0 else 1))
            prev = width
    return BlockNet(class_names, input_size, stem_channels, layout)


def probabilities(model, x):
    """Class probabilities for a (1, 3, S, S) input, float64 softmax."""
    model.eval()
    with torch.no_grad():
        logits = model(x)
    return torch.softmax(logits.double(), dim=-1)[0].numpy()


def _load_unit(unit, prefix, tensors):
    names = unit_tensor_names(prefix)
    fields = (unit.conv.weight, unit.norm.weight, unit.norm.bias,
              unit.norm.running_mean, unit.norm.running_var)
    with torch.no_grad():
        for field, name in zip(fields, names):
            if name not in tensors:
                raise ValueError(f"manifest missing tensor: {name}")
            field.copy_(torch.from_numpy(np.ascontiguousarray(tensors[name])))


def import_interchange(model_dir):
    """Rebuild a BlockNet from an interchange directory."""
    spec, tensors = read_interchange(model_dir)
    stem_channels = None
    if "stem.conv.weight" in tensors:
        stem_channels = tensors["stem.conv.weight"].shape[0]
    layout = [(b.in_channels, b.out_channels, b.stride)
              for b in sorted(spec.blocks, key=lambda b: b.index)]
    model = BlockNet(spec.class_names, spec.input_size, stem_channels,
                     layout)
    if model.stem is not None:
        _load_unit(model.stem, "stem", tensors)
    for i, blk in enumerate(model.blocks):
        _load_unit(blk, f"block.{i}", tensors)
    with torch.no_grad():
        model.head.weight.copy_(torch.from_numpy(
            np.ascontiguousarray(tensors["head.weight"])))
        model.head.bias.copy_(torch.from_numpy(
            np.ascontiguousarray(tensors["head.bias"])))
    model.eval()
    return model
