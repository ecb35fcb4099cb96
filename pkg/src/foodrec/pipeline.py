"""End-to-end multi-item recognition.

An image is segmented into k regions; each segment is probed twice, once
through the bounding boxes of its significant connected regions and once
through the fixed sliding-window grid; every crop is classified; the two
prediction lists are fused per segment; and the per-segment answers are
merged into the final label set for the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import decision, localization, refnet, segmentation

SCORE_THRESHOLD = 0.5


@dataclass
class RecognizeConfig:
    k: int = 2
    algorithm: int = 2
    top_n: int = 2
    score_threshold: float = SCORE_THRESHOLD
    windows_on: str = "segment"   # or "original"
    se_size: int = 3
    seed: int = 0

    def validate(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.algorithm not in (1, 2):
            raise ValueError("algorithm must be 1 or 2")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if not 0.0 <= self.score_threshold < 1.0:
            raise ValueError("score threshold must be in [0, 1)")
        if self.windows_on not in ("segment", "original"):
            raise ValueError("windows_on must be 'segment' or 'original'")
        if self.se_size < 1 or self.se_size % 2 == 0:
            raise ValueError("se_size must be odd and >= 1")
        return self


def classify_crop(model, crop_img, score_threshold):
    """(label, score) of one crop, or None for background / weak scores."""
    probs = refnet.classify_image(model, crop_img)
    idx = int(probs.argmax())
    score = float(probs[idx])
    if idx == model.background_index or score < score_threshold:
        return None
    return model.class_names[idx], score


def classify_boxes(model, img, boxes, score_threshold):
    """Classify a list of (top, left, height, width) crops of an image."""
    preds = []
    for box in boxes:
        pred = classify_crop(model, localization.crop(img, box),
                             score_threshold)
        if pred is not None:
            preds.append(pred)
    return preds


@dataclass
class SegmentResult:
    mask: np.ndarray
    boxes: list
    box_predictions: list
    window_predictions: list
    fused: list


@dataclass
class RecognizeResult:
    labels: list          # final (label, score) list for the image
    segments: list        # per-segment SegmentResult


def recognize_image(model, img, cfg):
    """Full pipeline for one RGB image; returns a RecognizeResult."""
    cfg.validate()
    h, w = img.shape[:2]
    window_boxes = localization.sliding_windows(h, w)
    shared_window_preds = None
    if cfg.windows_on == "original":
        shared_window_preds = classify_boxes(model, img, window_boxes,
                                             cfg.score_threshold)
    segments = []
    per_segment_labels = []
    for mask, seg_img in segmentation.segment_image(model, img, cfg.k,
                                                    seed=cfg.seed):
        boxes = localization.locate_regions(mask, se_size=cfg.se_size)
        box_preds = classify_boxes(model, seg_img, boxes,
                                   cfg.score_threshold)
        if shared_window_preds is None:
            win_preds = classify_boxes(model, seg_img, window_boxes,
                                       cfg.score_threshold)
        else:
            win_preds = shared_window_preds
        if cfg.algorithm == 1:
            one = decision.fuse_consensus(box_preds, win_preds)
            fused = [one] if one is not None else []
        else:
            fused = decision.fuse_pooled(box_preds, win_preds,
                                         top_n=cfg.top_n)
        segments.append(SegmentResult(mask, boxes, box_preds, win_preds,
                                      fused))
        per_segment_labels.append(fused)
    labels = decision.merge_segment_results(per_segment_labels)
    return RecognizeResult(labels, segments)


def baseline_recognize(model, img, k, score_threshold=SCORE_THRESHOLD,
                       seed=0):
    """Whole-segment classification, no boxes or windows.

    Each segment image is classified directly; background and weak scores
    are dropped; duplicate labels keep the max score. This is the reference
    the fused pipeline is compared against.
    """
    per_segment = []
    for _, seg_img in segmentation.segment_image(model, img, k, seed=seed):
        pred = classify_crop(model, seg_img, score_threshold)
        per_segment.append([pred] if pred is not None else [])
    return decision.merge_segment_results(per_segment)
