"""Fusing per-region predictions into a segment-level answer.

A segment yields two lists of (label, score) predictions: one from the
bounding boxes that morphology found, one from the sliding-window grid.
Two fusion rules are provided. The consensus rule reduces each list to its
majority vote and reconciles the two votes. The pooling rule ranks the
combined pool by score, keeps the strongest few, and merges duplicates, so
a segment may contribute more than one label.
"""

from __future__ import annotations

import numpy as np


def _check_predictions(preds, what):
    out = []
    for p in preds:
        label, score = p
        score = float(score)
        if not np.isfinite(score):
            raise ValueError(f"{what}: non-finite score for {label!r}")
        out.append((str(label), score))
    return out


def majority_vote(preds):
    """Reduce a prediction list to its plurality (label, mean score).

    Empty list gives None. Count ties break toward the higher mean score,
    then the lexicographically smaller label.
    """
    preds = _check_predictions(preds, "majority_vote")
    if not preds:
        return None
    counts = {}
    sums = {}
    for label, score in preds:
        counts[label] = counts.get(label, 0) + 1
        sums[label] = sums.get(label, 0.0) + score
    ranked = sorted(counts,
                    key=lambda lb: (-counts[lb], -sums[lb] / counts[lb], lb))
    label = ranked[0]
    return label, sums[label] / counts[label]


def fuse_consensus(box_preds, window_preds):
    """Combine the two prediction lists into at most one (label, score).

    Each list is reduced by majority vote. If the votes agree, the result
    is that label with the mean of the two scores; if they disagree, the
    vote with the higher score wins (ties toward the lexicographically
    smaller label). If only one list has predictions its vote stands; if
    neither does, the segment yields None.
    """
    a = majority_vote(box_preds)
    b = majority_vote(window_preds)
    if a is None:
        return b
    if b is None:
        return a
    if a[0] == b[0]:
        return a[0], (a[1] + b[1]) / 2.0
    if a[1] > b[1]:
        return a
    if b[1] > a[1]:
        return b
    return a if a[0] < b[0] else b


def fuse_pooled(box_preds, window_preds, top_n=2):
    """Pool both lists, keep the strongest entries, merge duplicates.

    The pool is ordered by descending score (label ascending on ties), the
    first ``top_n`` entries are kept, duplicate labels among the kept
    entries are merged by mean score, and the merged list is returned in
    the same ordering. The result holds between 0 and top_n entries.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    pool = _check_predictions(box_preds, "fuse_pooled") \
        + _check_predictions(window_preds, "fuse_pooled")
    pool.sort(key=lambda p: (-p[1], p[0]))
    kept = pool[:top_n]
    sums = {}
    counts = {}
    for label, score in kept:
        sums[label] = sums.get(label, 0.0) + score
        counts[label] = counts.get(label, 0) + 1
    merged = [(label, sums[label] / counts[label]) for label in sums]
    merged.sort(key=lambda p: (-p[1], p[0]))
    return merged


def merge_segment_results(per_segment):
    """Union the per-segment label lists; duplicates keep the max score.

    ``per_segment`` is an iterable of (label, score) lists. The merged
    result is sorted by descending score, label ascending on ties.
    """
    best = {}
    for preds in per_segment:
        for label, score in _check_predictions(preds,
                                               "merge_segment_results"):
            if label not in best or score > best[label]:
                best[label] = score
    out = list(best.items())
    out.sort(key=lambda p: (-p[1], p[0]))
    return out
