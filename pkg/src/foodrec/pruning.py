"""Similarity-guided block pruning.

Each block's output tensor is collapsed channel-wise into one 2-D map; the
structural similarity between every pair of maps drives the choice of which
block to drop. Two blocks that see the world almost identically are
redundant, so the later one goes, the network is fine-tuned, and the loop
repeats until no eligible pair is similar enough.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .numerics import check_finite, resize_bilinear_f32
from . import refnet

SSIM_K1 = 0.01
SSIM_K2 = 0.03


class PruningExhausted(Exception):
    """No prunable block is left to remove."""


def channel_sum_map(feature_map):
    """Collapse a (C, H, W) tensor to one (H, W) map by summing channels."""
    fm = np.asarray(feature_map, dtype=np.float32)
    if fm.ndim != 3:
        raise ValueError(f"expected (C, H, W) feature map, got {fm.shape}")
    return fm.sum(axis=0, dtype=np.float64).astype(np.float32)


def _minmax(a):
    lo = float(a.min())
    hi = float(a.max())
    if hi <= lo:
        return np.zeros_like(a, dtype=np.float64)
    return (a.astype(np.float64) - lo) / (hi - lo)


def ssim(map_a, map_b):
    """Global structural similarity of two 2-D maps.

    Maps of unequal size are first resized (bilinear) to the elementwise
    minimum of the two shapes. Both are then min-max normalized to [0, 1],
    so the dynamic range L is 1 and the stabilizers are C1 = (0.01)^2 and
    C2 = (0.03)^2. A single global score is computed from population
    statistics; there is no sliding window.
    """
    a = np.asarray(map_a, dtype=np.float32)
    b = np.asarray(map_b, dtype=np.float32)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("ssim expects 2-D maps")
    if a.size == 0 or b.size == 0:
        raise ValueError("ssim of empty map")
    th, tw = min(a.shape[0], b.shape[0]), min(a.shape[1], b.shape[1])
    if a.shape != (th, tw):
        a = resize_bilinear_f32(a, th, tw)
    if b.shape != (th, tw):
        b = resize_bilinear_f32(b, th, tw)
    x = _minmax(a)
    y = _minmax(b)
    mx = x.mean()
    my = y.mean()
    vx = x.var()
    vy = y.var()
    cov = ((x - mx) * (y - my)).mean()
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2
    val = ((2 * mx * my + c1) * (2 * cov + c2)) \
        / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(np.clip(val, -1.0, 1.0))


def similarity_matrix(maps):
    """Symmetric SSIM matrix over a list of 2-D maps; diagonal is 1."""
    n = len(maps)
    mat = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = ssim(maps[i], maps[j])
    return check_finite(mat, "similarity matrix")


def block_similarity(model, img):
    """Similarity matrix of a model's block maps for one probe image."""
    x = refnet.preprocess(img, model.input_size)
    maps = [channel_sum_map(m) for m in refnet.block_feature_maps(model, x)]
    return similarity_matrix(maps)


def select_prune_pair(matrix, prunable):
    """Pick the most similar (i, j) pair whose later block can be removed.

    Scans the upper triangle in row-major order; only pairs whose second
    index is in ``prunable`` are eligible. Ties keep the first pair found.
    Returns (i, j, similarity); the block to remove is j.
    """
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("similarity matrix must be square")
    eligible = set(int(p) for p in prunable)
    best = None
    n = mat.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if j not in eligible:
                continue
            if best is None or mat[i, j] > best[2]:
                best = (i, j, float(mat[i, j]))
    if best is None:
        raise PruningExhausted("no prunable block remains")
    return best


def flops_estimate(model):
    """Multiply-accumulate count of one forward pass (conv + head)."""
    shapes = refnet.feature_shapes(model)
    total = 0
    if model.stem is not None:
        _, h, w = shapes[0]
        total += model.stem.out_channels * 3 * 9 * h * w
    for blk, (_, h, w) in zip(model.blocks, shapes[1:]):
        total += blk.out_channels * blk.in_channels * 9 * h * w
    total += model.head_w.size
    return int(total)


@dataclass
class PruneConfig:
    threshold: float = 0.8
    max_rounds: int = 4
    fine_tune: refnet.TrainConfig = field(default_factory=refnet.TrainConfig)

    def validate(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be inside (0, 1)")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        self.fine_tune.validate()


@dataclass
class PruneRound:
    round: int
    pair_i: int
    pair_j: int
    max_ssim: float
    removed: int
    params_before: int
    params_after: int
    flops_after: int
    val_accuracy: float


@dataclass
class PruneResult:
    model: refnet.Model
    rounds: list[PruneRound]
    stop_reason: str


def write_prune_log(rounds, stop_reason, path):
    """CSV log of a pruning run, one row per round. Indices are 0-based."""
    header = ("round,pair_i,pair_j,max_ssim,removed,params_before,"
              "params_after,flops_after,val_accuracy")
    lines = [header]
    for r in rounds:
        lines.append(f"{r.round},{r.pair_i},{r.pair_j},{r.max_ssim:.6f},"
                     f"{r.removed},{r.params_before},{r.params_after},"
                     f"{r.flops_after},{r.val_accuracy:.6f}")
    lines.append(f"# stop: {stop_reason}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def prune_loop(model, probe_img, train_samples, val_samples, cfg):
    """Iteratively remove the most redundant block and fine-tune.

    Each round recomputes the block similarity matrix on the probe image,
    picks the best eligible pair, removes the pair's later block, fine-tunes
    on ``train_samples``, and records validation accuracy. Stops when the
    best eligible similarity falls below the threshold, the round budget is
    spent, or no prunable block remains.
    """
    cfg.validate()
    current = model.copy()
    rounds = []
    stop = f"round budget reached ({cfg.max_rounds})"
    for rnd in range(cfg.max_rounds):
        prunable = [b.index for b in current.blocks if b.prunable]
        if not prunable:
            stop = "no prunable blocks remain"
            break
        matrix = block_similarity(current, probe_img)
        i, j, score = select_prune_pair(matrix, prunable)
        if score < cfg.threshold:
            stop = (f"best eligible similarity {score:.4f} below threshold "
                    f"{cfg.threshold}")
            break
        params_before = refnet.param_count(current)
        ft_cfg = refnet.TrainConfig(
            epochs=cfg.fine_tune.epochs,
            batch_size=cfg.fine_tune.batch_size,
            learning_rate=cfg.fine_tune.learning_rate,
            seed=cfg.fine_tune.seed + rnd)
        current = refnet.train(refnet.remove_block(current, j),
                               train_samples, ft_cfg)
        acc = refnet.evaluate_accuracy(current, val_samples) \
            if val_samples else float("nan")
        rounds.append(PruneRound(
            round=rnd, pair_i=i, pair_j=j, max_ssim=score, removed=j,
            params_before=params_before,
            params_after=refnet.param_count(current),
            flops_after=flops_estimate(current),
            val_accuracy=acc))
    return PruneResult(current, rounds, stop)
