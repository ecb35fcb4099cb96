"""Accuracy accounting for single-label and multi-label predictions.

Single-label evaluation builds a confusion matrix and derives overall
accuracy plus per-class precision, recall, and F1 from its margins.
Multi-label evaluation compares predicted and true label sets per image.
The 0/0 cases are pinned: a ratio with an empty denominator is 0, except
that two empty sets are in perfect agreement (precision, recall, and F1
all 1).
"""

from __future__ import annotations

import numpy as np


def confusion_matrix(true_idx, pred_idx, n_classes):
    """Counts indexed [true, predicted]."""
    t = np.asarray(true_idx, dtype=np.int64)
    p = np.asarray(pred_idx, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("true and predicted index arrays must be equal "
                         "1-D shapes")
    if len(t) and (t.min() < 0 or t.max() >= n_classes
                   or p.min() < 0 or p.max() >= n_classes):
        raise ValueError("class index out of range")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (t, p), 1)
    return mat


def confusion(pairs, class_names):
    """Confusion matrix from (true label, predicted label) pairs."""
    index = {name: i for i, name in enumerate(class_names)}
    t = []
    p = []
    for true_label, pred_label in pairs:
        if true_label not in index:
            raise ValueError(f"unknown label: {true_label!r}")
        if pred_label not in index:
            raise ValueError(f"unknown label: {pred_label!r}")
        t.append(index[true_label])
        p.append(index[pred_label])
    return confusion_matrix(t, p, len(class_names))


def _safe_div(num, den):
    return num / den if den > 0 else 0.0


def accuracy_from_confusion(mat):
    mat = np.asarray(mat)
    return _safe_div(float(np.trace(mat)), float(mat.sum()))


def per_class_metrics(mat):
    """Per-class (precision, recall, f1) lists from a confusion matrix.

    A class that was never predicted has precision 0; a class with no true
    samples has recall 0; F1 of two zeros is 0.
    """
    mat = np.asarray(mat, dtype=np.float64)
    n = mat.shape[0]
    precision = np.zeros(n)
    recall = np.zeros(n)
    f1 = np.zeros(n)
    for c in range(n):
        tp = mat[c, c]
        precision[c] = _safe_div(tp, mat[:, c].sum())
        recall[c] = _safe_div(tp, mat[c, :].sum())
        f1[c] = _safe_div(2 * precision[c] * recall[c],
                          precision[c] + recall[c])
    return precision, recall, f1


def classification_report(true_idx, pred_idx, class_names):
    """Confusion matrix plus the derived scores, as a plain dict."""
    n = len(class_names)
    mat = confusion_matrix(true_idx, pred_idx, n)
    precision, recall, f1 = per_class_metrics(mat)
    return {
        "confusion": mat,
        "accuracy": accuracy_from_confusion(mat),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_precision": float(precision.mean()) if n else 0.0,
        "macro_recall": float(recall.mean()) if n else 0.0,
        "macro_f1": float(f1.mean()) if n else 0.0,
        "class_names": list(class_names),
    }


def set_metrics(true_labels, pred_labels):
    """Precision/recall/F1 of one image's predicted label set.

    Both sets empty counts as a perfect match.
    """
    t = set(true_labels)
    p = set(pred_labels)
    if not t and not p:
        return 1.0, 1.0, 1.0
    hit = len(t & p)
    precision = _safe_div(hit, len(p))
    recall = _safe_div(hit, len(t))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return precision, recall, f1


def multilabel_report(pairs):
    """Aggregate per-image set metrics over (true_set, pred_set) pairs.

    Returns means and medians of per-image precision, recall, and F1.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no evaluation pairs")
    per = np.array([set_metrics(t, p) for t, p in pairs], dtype=np.float64)
    return {
        "n_images": len(pairs),
        "mean_precision": float(per[:, 0].mean()),
        "mean_recall": float(per[:, 1].mean()),
        "mean_f1": float(per[:, 2].mean()),
        "median_precision": float(np.median(per[:, 0])),
        "median_recall": float(np.median(per[:, 1])),
        "median_f1": float(np.median(per[:, 2])),
        "per_image": per,
    }


def per_class_presence_recall(pairs, class_names):
    """How often each label is recovered when it is truly present.

    For every class, counts the images whose true set contains it and the
    fraction of those where the predicted set contains it too. Classes
    never present get recall 0 and support 0.
    """
    support = {c: 0 for c in class_names}
    hits = {c: 0 for c in class_names}
    for true_set, pred_set in pairs:
        ts = set(true_set)
        ps = set(pred_set)
        for c in ts:
            if c in support:
                support[c] += 1
                if c in ps:
                    hits[c] += 1
    return {c: (_safe_div(hits[c], support[c]), support[c])
            for c in class_names}


def low_f1_classes(report, threshold=0.5):
    """(class, precision, recall, f1) rows with F1 strictly below threshold.

    Rows are sorted ascending by F1, so the worst offender comes first.
    """
    rows = [(name, float(report["precision"][i]), float(report["recall"][i]),
             float(report["f1"][i]))
            for i, name in enumerate(report["class_names"])
            if report["f1"][i] < threshold]
    rows.sort(key=lambda r: r[3])
    return rows


def subset_mean_recall(report, subset):
    """Mean per-class recall over a subset of a report's classes.

    This is the mAcc-style figure used for cross-dataset comparison on a
    shared class subset.
    """
    if not subset:
        raise ValueError("empty class subset")
    index = {name: i for i, name in enumerate(report["class_names"])}
    recalls = []
    for name in subset:
        if name not in index:
            raise ValueError(f"unknown class in subset: {name!r}")
        recalls.append(float(report["recall"][index[name]]))
    return float(np.mean(recalls))


def read_class_map(path):
    """Parse a class-mapping file: `<local-name> <external-name>` per line.

    Blank lines and `#` comments are skipped. Returns a dict local -> external;
    the keys define the class subset for ``subset_mean_recall``.
    """
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected '<local> <external>', "
                    f"got {line!r}")
            local, external = parts
            if local in mapping:
                raise ValueError(f"{path}:{lineno}: duplicate local class "
                                 f"{local!r}")
            mapping[local] = external
    return mapping


def format_report_csv(report):
    """Per-class metric table as CSV text."""
    lines = ["class,precision,recall,f1"]
    for i, name in enumerate(report["class_names"]):
        lines.append(f"{name},{report['precision'][i]:.4f},"
                     f"{report['recall'][i]:.4f},{report['f1'][i]:.4f}")
    lines.append(f"_macro,{report['macro_precision']:.4f},"
                 f"{report['macro_recall']:.4f},{report['macro_f1']:.4f}")
    lines.append(f"_accuracy,{report['accuracy']:.4f},,")
    return "\n".join(lines) + "\n"


def format_confusion_csv(report):
    """Confusion matrix dump as `true,pred,count` rows (non-zero only)."""
    lines = ["true,pred,count"]
    names = report["class_names"]
    mat = report["confusion"]
    for t in range(len(names)):
        for p in range(len(names)):
            if mat[t, p]:
                lines.append(f"{names[t]},{names[p]},{int(mat[t, p])}")
    return "\n".join(lines) + "\n"


def format_multilabel_csv(stats):
    """Aggregate multi-label metrics as CSV text."""
    lines = ["metric,mean,median"]
    for metric in ("precision", "recall", "f1"):
        lines.append(f"{metric},{stats['mean_' + metric]:.4f},"
                     f"{stats['median_' + metric]:.4f}")
    lines.append(f"n_images,{stats['n_images']},")
    return "\n".join(lines) + "\n"
