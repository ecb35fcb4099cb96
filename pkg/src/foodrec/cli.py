"""Command-line entry points.

Subcommands: recognize, segment, prune, train, eval. Every command takes
`--config <file>`; the config format is `key = value` lines with dotted
keys (see config.py). Reports are CSV or tab-separated text under the
configured output directory; identical config and seed give byte-identical
reports apart from the timing files.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import (config as cfgmod, datasets, evaluation, localization,
               pipeline, pruning, refnet, segmentation)
from .raster_io import draw_rectangles, read_image, write_image

SWEEP_NS = (1, 2, 3, 5)
TIMING_REPS = 10


def _recognize_config(cfg, args):
    rc = pipeline.RecognizeConfig(
        k=cfgmod.get_int(cfg, "recognize.k", 2),
        algorithm=cfgmod.get_int(cfg, "recognize.algorithm", 2),
        top_n=cfgmod.get_int(cfg, "recognize.top_n", 2),
        score_threshold=cfgmod.get_float(cfg, "recognize.score_threshold",
                                         pipeline.SCORE_THRESHOLD),
        windows_on=cfgmod.get_choice(cfg, "recognize.windows_on",
                                     ("segment", "original"), "segment"),
        se_size=cfgmod.get_int(cfg, "recognize.se_size", 3),
        seed=cfgmod.get_int(cfg, "recognize.seed", 0))
    if getattr(args, "algorithm", None) is not None:
        rc.algorithm = args.algorithm
    if getattr(args, "top_n", None) is not None:
        rc.top_n = args.top_n
    if getattr(args, "windows_on", None) is not None:
        rc.windows_on = args.windows_on
    return rc.validate()


def _load_model(cfg):
    return refnet.load_model(cfgmod.get_str(cfg, "model"))


def _out_dir(cfg):
    out = cfgmod.get_str(cfg, "output")
    os.makedirs(out, exist_ok=True)
    return out


def format_prediction_line(path, labels):
    """`<path>\\t<label:score;...>`; scores printed with 4 decimals."""
    body = ";".join(f"{label}:{score:.4f}" for label, score in labels)
    return f"{path}\t{body}"


_WORKER = {}


def _worker_init(model_dir, rc):
    _WORKER["model"] = refnet.load_model(model_dir)
    _WORKER["rc"] = rc


def _worker_recognize(task):
    path, k = task
    rc = _WORKER["rc"]
    if k is not None:
        rc = pipeline.RecognizeConfig(**{**rc.__dict__, "k": k})
    img = read_image(path)
    return path, pipeline.recognize_image(_WORKER["model"], img, rc).labels


def _recognize_index(model, model_dir, index, rc, workers):
    tasks = [(e.path, e.k) for e in index.entries]
    if workers <= 1:
        _worker_init_local(model, rc)
        return [_worker_recognize(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers,
                             initializer=_worker_init,
                             initargs=(model_dir, rc)) as pool:
        return list(pool.map(_worker_recognize, tasks))


def _worker_init_local(model, rc):
    _WORKER["model"] = model
    _WORKER["rc"] = rc


def cmd_recognize(args):
    cfg = cfgmod.load_config(args.config)
    model_dir = cfgmod.get_str(cfg, "model")
    model = refnet.load_model(model_dir)
    rc = _recognize_config(cfg, args)
    out = _out_dir(cfg)
    workers = cfgmod.get_int(cfg, "workers", 1)
    index = datasets.ingest(cfgmod.get_str(cfg, "dataset"), "multi",
                            model.class_names)
    results = _recognize_index(model, model_dir, index, rc, workers)

    lines = [format_prediction_line(path, labels)
             for path, labels in results]
    with open(os.path.join(out, "per_image.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))

    truth = {e.path: set(e.labels) for e in index.entries}
    pairs = [(truth[path], {label for label, _ in labels})
             for path, labels in results]
    stats = evaluation.multilabel_report(pairs) if pairs else None
    if stats is not None:
        with open(os.path.join(out, "set_metrics.csv"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(evaluation.format_multilabel_csv(stats))
    print(f"recognized {len(results)} images -> {out}")
    if stats is not None:
        print(f"mean F1 {stats['mean_f1']:.4f}, "
              f"median F1 {stats['median_f1']:.4f}")
    return 0


def cmd_eval(args):
    cfg = cfgmod.load_config(args.config)
    model_dir = cfgmod.get_str(cfg, "model")
    model = refnet.load_model(model_dir)
    rc = _recognize_config(cfg, args)
    out = _out_dir(cfg)
    workers = cfgmod.get_int(cfg, "workers", 1)
    index = datasets.ingest(cfgmod.get_str(cfg, "dataset"), "multi",
                            model.class_names)
    truth = {e.path: set(e.labels) for e in index.entries}

    rows = ["algorithm,n,mean_precision,mean_recall,mean_f1,"
            "median_precision,median_recall,median_f1"]

    def run(rc_run, tag, n_tag):
        results = _recognize_index(model, model_dir, index, rc_run, workers)
        pairs = [(truth[path], {label for label, _ in labels})
                 for path, labels in results]
        stats = evaluation.multilabel_report(pairs)
        rows.append(
            f"{tag},{n_tag},{stats['mean_precision']:.4f},"
            f"{stats['mean_recall']:.4f},{stats['mean_f1']:.4f},"
            f"{stats['median_precision']:.4f},{stats['median_recall']:.4f},"
            f"{stats['median_f1']:.4f}")
        return results

    base = {**rc.__dict__}
    run(pipeline.RecognizeConfig(**{**base, "algorithm": 1}), 1, "-")
    results_for_records = None
    for n in SWEEP_NS:
        res = run(pipeline.RecognizeConfig(**{**base, "algorithm": 2,
                                              "top_n": n}), 2, n)
        if n == rc.top_n:
            results_for_records = res
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    if results_for_records is not None:
        lines = [format_prediction_line(path, labels)
                 for path, labels in results_for_records]
        with open(os.path.join(out, "per_image.txt"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    print(f"evaluated {len(index)} images over algorithm 1 and "
          f"algorithm 2 n={list(SWEEP_NS)} -> {out}")
    return 0


def cmd_segment(args):
    cfg = cfgmod.load_config(args.config)
    model = _load_model(cfg)
    out = _out_dir(cfg)
    k_default = cfgmod.get_int(cfg, "segment.k", 2)
    seed = cfgmod.get_int(cfg, "segment.seed", 0)
    se_size = cfgmod.get_int(cfg, "segment.se_size", 3)
    root = cfgmod.get_str(cfg, "dataset")
    paths = [os.path.join(root, n) for n in sorted(os.listdir(root))
             if datasets._is_image(n)]
    if not paths:
        raise ValueError(f"no images found in {root}")
    timing_rows = ["image,mean_seconds"]
    means = []
    for path in paths:
        img = read_image(path)
        k = datasets._read_sidecar_k(path) or k_default
        segments = segmentation.segment_image(model, img, k, seed=seed)
        segmentation.segment_image(model, img, k, seed=seed)  # warm
        t0 = time.perf_counter()
        for _ in range(TIMING_REPS):
            segmentation.segment_image(model, img, k, seed=seed)
        mean_s = (time.perf_counter() - t0) / TIMING_REPS
        means.append(mean_s)
        stem = os.path.splitext(os.path.basename(path))[0]
        boxes_img = img
        for i, (mask, seg_img) in enumerate(segments):
            write_image(os.path.join(out, f"{stem}.seg{i}.png"),
                        seg_img)
            write_image(os.path.join(out, f"{stem}.mask{i}.png"),
                        np.repeat(mask[:, :, None], 3,
                                  axis=2).astype(np.uint8) * 255)
            boxes = localization.locate_regions(mask, se_size=se_size)
            boxes_img = draw_rectangles(boxes_img, boxes)
        write_image(os.path.join(out, f"{stem}.boxes.png"), boxes_img)
        timing_rows.append(f"{path},{mean_s:.6f}")
    timing_rows.append(f"_overall,{float(np.mean(means)):.6f}")
    with open(os.path.join(out, "timing.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(timing_rows) + "\n")
    print(f"segmented {len(paths)} images, overall mean "
          f"{float(np.mean(means)):.4f}s -> {out}")
    return 0


def _train_config(cfg, prefix, default_seed=0):
    return refnet.TrainConfig(
        epochs=cfgmod.get_int(cfg, f"{prefix}.epochs", 10),
        batch_size=cfgmod.get_int(cfg, f"{prefix}.batch_size", 16),
        learning_rate=cfgmod.get_float(cfg, f"{prefix}.learning_rate", 0.05),
        seed=cfgmod.get_int(cfg, f"{prefix}.seed", default_seed))


def cmd_prune(args):
    cfg = cfgmod.load_config(args.config)
    model = _load_model(cfg)
    out = _out_dir(cfg)
    probe = read_image(cfgmod.get_str(cfg, "prune.probe"))
    train_idx = datasets.ingest(cfgmod.get_str(cfg, "prune.train"),
                                "single", model.class_names)
    val_idx = datasets.ingest(cfgmod.get_str(cfg, "prune.val"), "single",
                              model.class_names)
    pc = pruning.PruneConfig(
        threshold=cfgmod.get_float(cfg, "prune.threshold", 0.8),
        max_rounds=cfgmod.get_int(cfg, "prune.max_rounds", 4),
        fine_tune=_train_config(cfg, "prune.fine_tune"))
    result = pruning.prune_loop(model, probe,
                                datasets.load_pairs(train_idx),
                                datasets.load_pairs(val_idx), pc)
    pruning.write_prune_log(result.rounds, result.stop_reason,
                            os.path.join(out, "prune_log.csv"))
    model_out = os.path.join(out, "pruned_model")
    refnet.save_model(result.model, model_out)
    print(f"pruned {len(result.rounds)} round(s); stop: "
          f"{result.stop_reason}; model -> {model_out}")
    return 0


def cmd_train(args):
    cfg = cfgmod.load_config(args.config)
    out = _out_dir(cfg)
    train_root = cfgmod.get_str(cfg, "train.dataset")
    tc = _train_config(cfg, "train")
    if "model" in cfg:
        model = _load_model(cfg)
    else:
        idx = datasets.ingest(train_root, "single")
        names = sorted({e.labels[0] for e in idx.entries})
        model = refnet.build_reference_model(
            names, input_size=cfgmod.get_int(cfg, "train.input_size", 64),
            seed=cfgmod.get_int(cfg, "train.init_seed", 0))
    train_idx = datasets.ingest(train_root, "single", model.class_names)
    trained = refnet.train(model, datasets.load_pairs(train_idx), tc)
    model_out = os.path.join(out, "trained_model")
    refnet.save_model(trained, model_out)

    val_key = "train.val" if "train.val" in cfg else "train.dataset"
    val_idx = datasets.ingest(cfgmod.get_str(cfg, val_key), "single",
                              trained.class_names)
    pairs = datasets.load_pairs(val_idx)
    true_idx = []
    pred_idx = []
    name_to_i = {n: i for i, n in enumerate(trained.class_names)}
    for img, label in pairs:
        probs = refnet.classify_image(trained, img)
        true_idx.append(name_to_i[label])
        pred_idx.append(int(probs.argmax()))
    report = evaluation.classification_report(true_idx, pred_idx,
                                              trained.class_names)
    with open(os.path.join(out, "class_metrics.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(evaluation.format_report_csv(report))
        if "train.class_map" in cfg:
            mapping = evaluation.read_class_map(cfg["train.class_map"])
            macc = evaluation.subset_mean_recall(report,
                                                 sorted(mapping))
            fh.write(f"_subset_mean_recall,{macc:.4f},,\n")
    with open(os.path.join(out, "confusion.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(evaluation.format_confusion_csv(report))
    print(f"trained on {len(train_idx)} images; val accuracy "
          f"{report['accuracy']:.4f}; model -> {model_out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="foodrec",
        description="Multi-item image recognition: segmentation-driven "
                    "region proposals, block-pruned CNN classification, "
                    "and prediction fusion.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("recognize", cmd_recognize),
                     ("segment", cmd_segment),
                     ("prune", cmd_prune),
                     ("train", cmd_train),
                     ("eval", cmd_eval)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        if name in ("recognize", "eval"):
            p.add_argument("--algorithm", type=int, choices=(1, 2))
            p.add_argument("--top-n", dest="top_n", type=int)
            p.add_argument("--windows-on", dest="windows_on",
                           choices=("segment", "original"))
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
