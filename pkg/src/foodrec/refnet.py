"""Block-structured CNN classifier.

A model is a stem convolution, an ordered list of blocks, and a
global-average-pool + affine + softmax head. Blocks keep the layout that
makes whole-block removal well defined: a block is prunable exactly when it
preserves its input shape (in_channels == out_channels and stride 1), in
which case it computes ``x + relu(norm(conv(x)))``; shape-changing blocks
compute ``relu(norm(conv(x)))``.

The on-disk interchange format (``save_model``/``load_model``) is a
directory with a ``manifest.txt`` and one raw little-endian float32 file per
tensor; see the README for the full grammar and the pinned conventions
(3x3 stride-2 pad-1 stem, norm eps 1e-5, input mean/std 0.5/0.5).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .numerics import check_finite, normalize_to_input, resize_bilinear

NORM_EPS = 1e-5
RUNNING_MOMENTUM = 0.1
INPUT_MEAN = (0.5, 0.5, 0.5)
INPUT_STD = (0.5, 0.5, 0.5)


@dataclass
class ConvNorm:
    """A 3x3 convolution (no bias) followed by a normalization layer."""

    conv_w: np.ndarray       # (out, in, 3, 3) float32
    scale: np.ndarray        # (out,) float32
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def copy(self):
        return ConvNorm(self.conv_w.copy(), self.scale.copy(),
                        self.shift.copy(), self.running_mean.copy(),
                        self.running_var.copy())

    @property
    def out_channels(self):
        return self.conv_w.shape[0]

    @property
    def in_channels(self):
        return self.conv_w.shape[1]

    def n_params(self):
        return self.conv_w.size + 4 * self.out_channels


@dataclass
class Block:
    """One prunable or shape-changing unit of the backbone."""

    index: int
    stage: int
    in_channels: int
    out_channels: int
    stride: int
    prunable: bool
    weights: ConvNorm

    def copy(self):
        return replace(self, weights=self.weights.copy())


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.05
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")


@dataclass
class Model:
    """Full classifier: stem (optional), blocks, and the affine head."""

    input_size: int
    class_names: list[str]
    stem: ConvNorm | None
    blocks: list[Block]
    head_w: np.ndarray       # (classes, features) float32
    head_b: np.ndarray       # (classes,) float32

    def copy(self):
        return Model(self.input_size, list(self.class_names),
                     self.stem.copy() if self.stem else None,
                     [b.copy() for b in self.blocks],
                     self.head_w.copy(), self.head_b.copy())

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def background_index(self):
        return self.class_names.index("background")

    def validate(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("duplicate class names")
        if self.class_names.count("background") != 1:
            raise ValueError("class names must contain exactly one "
                             "'background'")
        prev = 3 if self.stem is None else self.stem.out_channels
        if self.stem is not None and self.stem.in_channels != 3:
            raise ValueError("stem must take 3 input channels")
        for pos, blk in enumerate(self.blocks):
            if blk.index != pos:
                raise ValueError(f"block indices not contiguous at {pos}")
            if blk.in_channels != prev:
                raise ValueError(
                    f"block {pos}: in_channels {blk.in_channels} does not "
                    f"match previous width {prev}")
            if blk.stride not in (1, 2):
                raise ValueError(f"block {pos}: stride must be 1 or 2")
            shape_preserving = (blk.in_channels == blk.out_channels
                                and blk.stride == 1)
            if blk.prunable != shape_preserving:
                raise ValueError(
                    f"block {pos}: prunable flag must be set exactly for "
                    "shape-preserving blocks")
            if blk.weights.conv_w.shape != (blk.out_channels,
                                            blk.in_channels, 3, 3):
                raise ValueError(f"block {pos}: conv kernel shape mismatch")
            prev = blk.out_channels
        if self.head_w.shape != (self.num_classes, prev):
            raise ValueError(
                f"head expects ({self.num_classes}, {prev}) weights, got "
                f"{self.head_w.shape}")
        if self.head_b.shape != (self.num_classes,):
            raise ValueError("head bias shape mismatch")
        return self


def _init_conv_norm(rng, in_ch, out_ch):
    fan_in = in_ch * 9
    bound = np.sqrt(6.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(out_ch, in_ch, 3, 3))
    return ConvNorm(w.astype(np.float32),
                    np.ones(out_ch, np.float32),
                    np.zeros(out_ch, np.float32),
                    np.zeros(out_ch, np.float32),
                    np.ones(out_ch, np.float32))


def build_model(class_names, input_size=64, seed=0, stem_channels=8,
                stage_widths=(16, 32, 64, 128), blocks_per_stage=3):
    """Build a randomly initialised block-structured classifier.

    The first block of each stage downsamples (stride 2) and changes width,
    the remaining blocks are shape-preserving residual blocks. Defaults give
    the 12-block reference net.
    """
    rng = np.random.default_rng(seed)
    stem = _init_conv_norm(rng, 3, stem_channels)
    blocks = []
    prev = stem_channels
    for stage, width in enumerate(stage_widths):
        for k in range(blocks_per_stage):
            first = k == 0
            blocks.append(Block(
                index=len(blocks), stage=stage,
                in_channels=prev, out_channels=width,
                stride=2 if first else 1, prunable=not first,
                weights=_init_conv_norm(rng, prev, width)))
            prev = width
    n_classes = len(class_names)
    bound = np.sqrt(6.0 / prev)
    head_w = rng.uniform(-bound, bound, size=(n_classes, prev))
    return Model(input_size, list(class_names), stem, blocks,
                 head_w.astype(np.float32),
                 np.zeros(n_classes, np.float32)).validate()


def build_reference_model(class_names, input_size=64, seed=0):
    """The default 12-block reference architecture."""
    return build_model(class_names, input_size=input_size, seed=seed)


# ---------------------------------------------------------------------------
# inference

def preprocess(img, input_size):
    """Resize an RGB image to the model input and normalize it."""
    if img.shape[0] != input_size or img.shape[1] != input_size:
        img = resize_bilinear(img, input_size, input_size)
    return normalize_to_input(img, INPUT_MEAN, INPUT_STD)


def _norm_eval(x, cn):
    inv = 1.0 / np.sqrt(cn.running_var + NORM_EPS)
    scale = (cn.scale * inv).astype(np.float32)
    shift = (cn.shift - cn.running_mean * scale).astype(np.float32)
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def _block_eval(x, blk):
    y = backend.conv2d_forward(x, blk.weights.conv_w, blk.stride, 1)
    y = np.maximum(_norm_eval(y, blk.weights), 0.0)
    return x + y if blk.prunable else y


def _check_input(model, x):
    x = np.ascontiguousarray(x, dtype=np.float32)
    want = (3, model.input_size, model.input_size)
    if x.shape != want:
        raise ValueError(f"input shape {x.shape} does not match model "
                         f"input {want}")
    return x


def feature_maps_batch(model, xb):
    """Per-block output tensors for a batch, in block order."""
    h = xb
    if model.stem is not None:
        h = backend.conv2d_forward(h, model.stem.conv_w, 2, 1)
        h = np.maximum(_norm_eval(h, model.stem), 0.0)
    maps = []
    for blk in model.blocks:
        h = _block_eval(h, blk)
        maps.append(h)
    return maps, h


def block_feature_maps(model, x):
    """Feature map of every block for one (3, S, S) input tensor.

    The last entry is the tensor fed to global average pooling; it is the
    map that segmentation clusters.
    """
    x = _check_input(model, x)
    maps, _ = feature_maps_batch(model, x[None])
    return [m[0] for m in maps]


def _softmax(logits):
    z = logits.astype(np.float64)
    z -= z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(model, xb):
    """Class probabilities for a (N, 3, S, S) float32 batch."""
    _, h = feature_maps_batch(model, np.ascontiguousarray(xb, np.float32))
    pooled = h.mean(axis=(2, 3))
    logits = pooled @ model.head_w.T + model.head_b
    return _softmax(logits)


def forward(model, x):
    """Probability vector over model.class_names for one input tensor."""
    x = _check_input(model, x)
    probs = forward_batch(model, x[None])[0]
    return check_finite(probs, "class probabilities")


def classify_image(model, img):
    """Preprocess an RGB image and return its probability vector."""
    return forward(model, preprocess(img, model.input_size))


# ---------------------------------------------------------------------------
# model surgery and accounting

def remove_block(model, position):
    """Return a copy of the model with one prunable block removed."""
    if not 0 <= position < len(model.blocks):
        raise ValueError(f"no block at position {position}")
    if not model.blocks[position].prunable:
        raise ValueError(f"block {position} is not prunable")
    out = model.copy()
    del out.blocks[position]
    for pos, blk in enumerate(out.blocks):
        blk.index = pos
    return out.validate()


def param_count(model):
    """Exact number of stored weight scalars (conv + norm + head)."""
    total = model.head_w.size + model.head_b.size
    if model.stem is not None:
        total += model.stem.n_params()
    for blk in model.blocks:
        total += blk.weights.n_params()
    return int(total)


def feature_shapes(model):
    """(channels, height, width) after the stem and after each block."""
    size = model.input_size
    shapes = []
    if model.stem is not None:
        size = (size - 1) // 2 + 1
        shapes.append((model.stem.out_channels, size, size))
    else:
        shapes.append((3, size, size))
    for blk in model.blocks:
        if blk.stride == 2:
            size = (size - 1) // 2 + 1
        shapes.append((blk.out_channels, size, size))
    return shapes


# ---------------------------------------------------------------------------
# training

def _prepare_samples(model, samples):
    if not samples:
        raise ValueError("empty dataset")
    names = {name: i for i, name in enumerate(model.class_names)}
    xs = np.empty((len(samples), 3, model.input_size, model.input_size),
                  dtype=np.float32)
    ys = np.empty(len(samples), dtype=np.int64)
    for i, (img, label) in enumerate(samples):
        if label not in names:
            raise ValueError(f"unknown class name: {label!r}")
        xs[i] = preprocess(img, model.input_size)
        ys[i] = names[label]
    return xs, ys


def _norm_train(x, cn):
    """Batch-statistics normalization; updates running stats in place."""
    m = x.shape[0] * x.shape[2] * x.shape[3]
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    y = cn.scale[None, :, None, None] * xhat + cn.shift[None, :, None, None]
    unbiased = var * (m / (m - 1)) if m > 1 else var
    cn.running_mean[:] = ((1 - RUNNING_MOMENTUM) * cn.running_mean
                          + RUNNING_MOMENTUM * mu)
    cn.running_var[:] = ((1 - RUNNING_MOMENTUM) * cn.running_var
                         + RUNNING_MOMENTUM * unbiased)
    return y.astype(np.float32), (xhat.astype(np.float32), inv, m)


def _norm_backward(dy, cn, cache):
    xhat, inv, m = cache
    dscale = (dy * xhat).sum(axis=(0, 2, 3))
    dshift = dy.sum(axis=(0, 2, 3))
    dxhat = dy * cn.scale[None, :, None, None]
    t = (dxhat - dxhat.mean(axis=(0, 2, 3))[None, :, None, None]
         - xhat * (dxhat * xhat).mean(axis=(0, 2, 3))[None, :, None, None])
    dx = t * inv[None, :, None, None]
    return dx.astype(np.float32), dscale.astype(np.float32), \
        dshift.astype(np.float32)


def _unit_train_forward(x, cn, stride):
    pre = backend.conv2d_forward(x, cn.conv_w, stride, 1)
    normed, bn_cache = _norm_train(pre, cn)
    out = np.maximum(normed, 0.0)
    return out, (x, normed, bn_cache)


def _unit_backward(dout, cn, stride, cache):
    x, normed, bn_cache = cache
    dnormed = dout * (normed > 0)
    dpre, dscale, dshift = _norm_backward(dnormed, cn, bn_cache)
    dw = backend.conv2d_backward_weights(dpre, x, cn.conv_w.shape, stride, 1)
    dx = backend.conv2d_backward_input(dpre, cn.conv_w, x.shape, stride, 1)
    return dx, (dw, dscale, dshift)


def _train_step(model, xb, yb, lr):
    """One SGD step over a mini-batch; returns the batch loss."""
    caches = []
    h = xb
    if model.stem is not None:
        h, cache = _unit_train_forward(h, model.stem, 2)
        caches.append(("stem", model.stem, 2, cache, False))
    for blk in model.blocks:
        y, cache = _unit_train_forward(h, blk.weights, blk.stride)
        caches.append(("block", blk.weights, blk.stride, cache, blk.prunable))
        h = h + y if blk.prunable else y
    n, c, fh, fw = h.shape
    pooled = h.mean(axis=(2, 3))
    logits = pooled @ model.head_w.T + model.head_b
    probs = _softmax(logits)
    loss = -np.mean(np.log(probs[np.arange(n), yb] + 1e-12))

    dlogits = probs
    dlogits[np.arange(n), yb] -= 1.0
    dlogits = (dlogits / n).astype(np.float32)
    dhead_w = dlogits.T @ pooled
    dhead_b = dlogits.sum(axis=0)
    dh = (dlogits @ model.head_w)[:, :, None, None] \
        * np.float32(1.0 / (fh * fw))
    dh = np.broadcast_to(dh, h.shape).astype(np.float32)

    updates = [(model.head_w, dhead_w), (model.head_b, dhead_b)]
    for kind, cn, stride, cache, residual in reversed(caches):
        dx, (dw, dscale, dshift) = _unit_backward(dh, cn, stride, cache)
        if residual:
            dx = dx + dh
        updates.extend([(cn.conv_w, dw), (cn.scale, dscale),
                        (cn.shift, dshift)])
        dh = dx
    for param, grad in updates:
        param -= lr * grad
    return float(loss)


def train(model, samples, cfg):
    """Fine-tune a copy of the model with plain mini-batch SGD.

    ``samples`` is a sequence of (RGB image, class name) pairs. Deterministic
    for a fixed (seed, data order, config).
    """
    cfg.validate()
    out = model.copy()
    xs, ys = _prepare_samples(out, samples)
    rng = np.random.default_rng(cfg.seed)
    lr = np.float32(cfg.learning_rate)
    n = len(samples)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            _train_step(out, xs[sel], ys[sel], lr)
    return out


def mean_cross_entropy(model, samples):
    """Mean CE loss over a sample set, inference-mode statistics."""
    xs, ys = _prepare_samples(model, samples)
    probs = forward_batch(model, xs)
    return float(-np.mean(np.log(probs[np.arange(len(ys)), ys] + 1e-12)))


def evaluate_accuracy(model, samples):
    """Top-1 accuracy over (image, label) pairs."""
    xs, ys = _prepare_samples(model, samples)
    probs = forward_batch(model, xs)
    return float(np.mean(probs.argmax(axis=1) == ys))


def loss_and_head_grads(model, samples):
    """CE loss and its analytic gradient w.r.t. the head parameters.

    Uses inference-mode statistics throughout so the result can be checked
    against finite differences of ``mean_cross_entropy``.
    """
    xs, ys = _prepare_samples(model, samples)
    _, h = feature_maps_batch(model, xs)
    pooled = h.mean(axis=(2, 3))
    logits = pooled @ model.head_w.T + model.head_b
    probs = _softmax(logits)
    n = len(ys)
    loss = float(-np.mean(np.log(probs[np.arange(n), ys] + 1e-12)))
    dlogits = probs
    dlogits[np.arange(n), ys] -= 1.0
    dlogits /= n
    return loss, dlogits.T @ pooled, dlogits.sum(axis=0)


# ---------------------------------------------------------------------------
# interchange format

_STEM_FIELDS = ("conv.weight", "norm.scale", "norm.shift", "norm.mean",
                "norm.var")


def _tensor_records(model):
    recs = []
    def unit(prefix, cn):
        recs.append((f"{prefix}.conv.weight", cn.conv_w))
        recs.append((f"{prefix}.norm.scale", cn.scale))
        recs.append((f"{prefix}.norm.shift", cn.shift))
        recs.append((f"{prefix}.norm.mean", cn.running_mean))
        recs.append((f"{prefix}.norm.var", cn.running_var))
    if model.stem is not None:
        unit("stem", model.stem)
    for blk in model.blocks:
        unit(f"block.{blk.index}", blk.weights)
    recs.append(("head.weight", model.head_w))
    recs.append(("head.bias", model.head_b))
    return recs


def save_model(model, out_dir):
    """Write the model to a directory in the interchange format."""
    model.validate()
    os.makedirs(out_dir, exist_ok=True)
    lines = ["format 1", f"input_size {model.input_size}"]
    for i, name in enumerate(model.class_names):
        lines.append(f"class {i} {name}")
    for blk in model.blocks:
        lines.append(f"block {blk.index} {blk.stage} {blk.in_channels} "
                     f"{blk.out_channels} {blk.stride} "
                     f"{1 if blk.prunable else 0}")
    for name, arr in _tensor_records(model):
        dims = "x".join(str(d) for d in arr.shape)
        fname = name + ".bin"
        lines.append(f"tensor {name} {dims} {fname}")
        with open(os.path.join(out_dir, fname), "wb") as fh:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_tensor(model_dir, name, dims, fname, want_shape=None):
    path = os.path.join(model_dir, fname)
    if not os.path.isfile(path):
        raise ValueError(f"missing tensor file: {fname}")
    with open(path, "rb") as fh:
        raw = fh.read()
    count = int(np.prod(dims))
    if len(raw) != 4 * count:
        raise ValueError(
            f"tensor {name}: manifest declares {tuple(dims)} "
            f"({4 * count} bytes) but {fname} holds {len(raw)} bytes")
    arr = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if want_shape is not None and arr.shape != want_shape:
        raise ValueError(f"tensor {name}: expected shape {want_shape}, "
                         f"manifest says {arr.shape}")
    return check_finite(arr, f"tensor {name}")


def load_model(model_dir):
    """Load a model saved in the interchange format."""
    manifest = os.path.join(model_dir, "manifest.txt")
    if not os.path.isfile(manifest):
        raise ValueError(f"manifest not found: {manifest}")
    with open(manifest, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "format 1":
        raise ValueError("manifest must start with 'format 1'")
    input_size = None
    classes = {}
    block_recs = []
    tensors = {}
    for ln in lines[1:]:
        kind, rest = ln.split(None, 1)
        if kind == "input_size":
            input_size = int(rest)
        elif kind == "class":
            idx, name = rest.split(None, 1)
            idx = int(idx)
            if idx in classes:
                raise ValueError(f"duplicate class index {idx}")
            classes[idx] = name.strip()
        elif kind == "block":
            vals = rest.split()
            if len(vals) != 6:
                raise ValueError(f"malformed block record: {ln}")
            block_recs.append(tuple(int(v) for v in vals))
        elif kind == "tensor":
            name, dims, fname = rest.split()
            if name in tensors:
                raise ValueError(f"duplicate tensor name: {name}")
            tensors[name] = (tuple(int(d) for d in dims.split("x")), fname)
        else:
            raise ValueError(f"unknown manifest record: {ln}")
    if input_size is None:
        raise ValueError("manifest missing input_size")
    if sorted(classes) != list(range(len(classes))):
        raise ValueError("class indices must be contiguous from 0")
    class_names = [classes[i] for i in range(len(classes))]

    def grab(name, want_shape=None):
        if name not in tensors:
            raise ValueError(f"manifest missing tensor: {name}")
        dims, fname = tensors[name]
        return _load_tensor(model_dir, name, dims, fname, want_shape)

    def unit(prefix, out_ch, in_ch):
        return ConvNorm(
            grab(f"{prefix}.conv.weight", (out_ch, in_ch, 3, 3)),
            grab(f"{prefix}.norm.scale", (out_ch,)),
            grab(f"{prefix}.norm.shift", (out_ch,)),
            grab(f"{prefix}.norm.mean", (out_ch,)),
            grab(f"{prefix}.norm.var", (out_ch,)))

    stem = None
    if "stem.conv.weight" in tensors:
        stem_out = tensors["stem.conv.weight"][0][0]
        stem = unit("stem", stem_out, 3)
    blocks = []
    for idx, stage, in_ch, out_ch, stride, prunable in block_recs:
        blocks.append(Block(idx, stage, in_ch, out_ch, stride,
                            bool(prunable),
                            unit(f"block.{idx}", out_ch, in_ch)))
    n_classes = len(class_names)
    if "head.weight" not in tensors:
        raise ValueError("manifest missing tensor: head.weight")
    feat = tensors["head.weight"][0][1]
    head_w = grab("head.weight", (n_classes, feat))
    head_b = grab("head.bias", (n_classes,))
    return Model(input_size, class_names, stem, blocks,
                 head_w, head_b).validate()
