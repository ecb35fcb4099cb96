"""Acceptance checks for the whole toolkit.

Each test covers one contract and prints a single
`[acceptance] <name>: PASS/FAIL` line on the real stdout, so the verdicts
survive pytest's capture. Tolerances and time budgets are pinned in the
tests, not configurable. The heavy fixtures (trained networks) are module
scoped and reused across criteria.
"""

import contextlib
import os
import time
from types import SimpleNamespace

import numpy as np
import pytest

from foodrec import (cli, decision, evaluation, localization, pipeline,
                     pruning, refnet, synth)
from foodrec.raster_io import write_image


@contextlib.contextmanager
def _criterion(capfd, name):
    problems = []
    try:
        yield problems
    except BaseException:
        with capfd.disabled():
            print(f"[acceptance] {name}: FAIL")
        raise
    verdict = "PASS" if not problems else "FAIL"
    with capfd.disabled():
        print(f"[acceptance] {name}: {verdict}")
    assert not problems, "; ".join(problems)


# ---------------------------------------------------------------------------
# shared trained artifacts

@pytest.fixture(scope="module")
def shape_net():
    """Reference 12-block net trained on the shape/color set.

    270 training and 81 validation images; the recipe reaches ~93%
    validation accuracy in well under a minute on one core.
    """
    train = synth.shape_dataset(30, seed=1)
    val = synth.shape_dataset(9, seed=2)
    model = refnet.build_reference_model(synth.shape_class_names(), seed=0)
    t0 = time.perf_counter()
    trained = refnet.train(model, train, refnet.TrainConfig(
        epochs=20, batch_size=16, learning_rate=0.03, seed=0))
    seconds = time.perf_counter() - t0
    acc = refnet.evaluate_accuracy(trained, val)
    return SimpleNamespace(model=trained, train=train, val=val,
                           val_accuracy=acc, train_seconds=seconds)


@pytest.fixture(scope="module")
def pruned_shape(shape_net):
    probe = synth.shape_sample("green-disk", np.random.default_rng(7))
    cfg = pruning.PruneConfig(
        threshold=0.8, max_rounds=2,
        fine_tune=refnet.TrainConfig(epochs=6, batch_size=16,
                                     learning_rate=0.02, seed=10))
    t0 = time.perf_counter()
    result = pruning.prune_loop(shape_net.model, probe, shape_net.train,
                                shape_net.val, cfg)
    seconds = time.perf_counter() - t0
    return SimpleNamespace(result=result, prune_seconds=seconds)


@pytest.fixture(scope="module")
def item_net():
    """Toy ingredient-crop classifier for the end-to-end composite check."""
    model = refnet.build_model(synth.ingredient_class_names(), input_size=32,
                               seed=1, stem_channels=8, stage_widths=(16,),
                               blocks_per_stage=2)
    t0 = time.perf_counter()
    trained = refnet.train(model, synth.ingredient_crop_dataset(16, seed=3),
                           refnet.TrainConfig(epochs=10, batch_size=16,
                                              learning_rate=0.05, seed=1))
    seconds = time.perf_counter() - t0
    return SimpleNamespace(model=trained, train_seconds=seconds)


# ---------------------------------------------------------------------------
# 1. per-class metrics against a brute-force counting oracle

def test_metrics_oracle(capfd):
    with _criterion(capfd, "metrics-oracle") as problems:
        rng = np.random.default_rng(0)
        n, k = 200, 10
        true = rng.integers(0, k, size=n)
        pred = rng.integers(0, k, size=n)
        names = [f"c{i:02d}" for i in range(k)]

        t0 = time.perf_counter()
        report = evaluation.classification_report(true, pred, names)
        elapsed = time.perf_counter() - t0

        correct = 0
        for c in range(k):
            tp = fp = fn = 0
            for t, p in zip(true, pred):
                if p == c and t == c:
                    tp += 1
                elif p == c:
                    fp += 1
                elif t == c:
                    fn += 1
            correct += tp
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = (2 * precision * recall / (precision + recall)
                  if precision + recall else 0.0)
            if abs(report["precision"][c] - precision) > 1e-12:
                problems.append(f"precision mismatch at class {c}")
            if abs(report["recall"][c] - recall) > 1e-12:
                problems.append(f"recall mismatch at class {c}")
            if abs(report["f1"][c] - f1) > 1e-12:
                problems.append(f"f1 mismatch at class {c}")
            if report["confusion"][c, c] != tp:
                problems.append(f"diagonal count mismatch at class {c}")
        if abs(report["accuracy"] - correct / n) > 1e-12:
            problems.append("accuracy mismatch")
        if elapsed >= 1.0:
            problems.append(f"report took {elapsed:.2f}s (budget 1s)")


# ---------------------------------------------------------------------------
# 2. pair selection on a fixed 15-block similarity matrix

REFERENCE_SIMILARITY_15 = np.array([
    [1, .455, .471, .344, .366, .255, .315, .304, .344, .309, .377, .334, .256, .243, .281],
    [.455, 1, .662, .406, .470, .342, .345, .392, .365, .372, .417, .384, .320, .301, .325],
    [.471, .662, 1, .443, .471, .317, .344, .365, .367, .347, .400, .368, .304, .279, .316],
    [.344, .406, .443, 1, .627, .543, .499, .567, .530, .502, .534, .562, .486, .451, .497],
    [.366, .470, .471, .627, 1, .462, .383, .486, .415, .392, .465, .452, .388, .368, .376],
    [.255, .342, .317, .543, .462, 1, .552, .724, .541, .497, .570, .636, .614, .602, .567],
    [.315, .345, .344, .499, .383, .552, 1, .612, .677, .667, .628, .616, .569, .530, .583],
    [.304, .392, .365, .567, .486, .724, .612, 1, .632, .666, .748, .712, .662, .608, .595],
    [.344, .365, .367, .530, .415, .541, .677, .632, 1, .667, .691, .684, .593, .540, .636],
    [.309, .372, .347, .502, .392, .497, .667, .666, .667, 1, .785, .723, .667, .567, .665],
    [.377, .417, .400, .534, .465, .570, .628, .748, .691, .785, 1, .711, .633, .552, .636],
    [.334, .384, .368, .562, .452, .636, .616, .712, .684, .723, .711, 1, .843, .741, .829],
    [.256, .320, .304, .486, .388, .614, .569, .662, .593, .667, .633, .843, 1, .813, .837],
    [.243, .301, .279, .451, .368, .602, .530, .608, .540, .567, .552, .741, .813, 1, .755],
    [.281, .325, .316, .497, .376, .567, .583, .595, .636, .665, .636, .829, .837, .755, 1],
])


def test_similarity_pair_selection(capfd):
    """On this published-style matrix the strongest pair is 12/13 in
    1-based numbering, so block 13 is the removal target."""
    with _criterion(capfd, "similarity-pair-selection") as problems:
        mat = REFERENCE_SIMILARITY_15
        if not np.array_equal(mat, mat.T) or not np.all(np.diag(mat) == 1):
            problems.append("fixed matrix transcription broken")
        everything = range(len(mat))
        pruning.select_prune_pair(np.eye(3), range(3))  # warm the path
        t0 = time.perf_counter()
        i, j, value = pruning.select_prune_pair(mat, everything)
        elapsed = time.perf_counter() - t0
        if (i + 1, j + 1) != (12, 13):
            problems.append(f"picked 1-based pair {(i + 1, j + 1)}, "
                            "expected (12, 13)")
        if abs(value - 0.843) > 1e-12:
            problems.append(f"pair value {value}, expected 0.843")
        if j + 1 != 13:
            problems.append("removal target is not block 13 (1-based)")
        if elapsed >= 1e-3:
            problems.append(f"selection took {elapsed * 1e3:.2f} ms "
                            "(budget 1 ms)")


# ---------------------------------------------------------------------------
# 3. SSIM identity, symmetry, and a second implementation

def _reference_ssim(a, b):
    # second implementation on purpose: plain accumulation over lists
    from foodrec.numerics import resize_bilinear_f32
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    th = min(a.shape[0], b.shape[0])
    tw = min(a.shape[1], b.shape[1])
    if a.shape != (th, tw):
        a = resize_bilinear_f32(a, th, tw)
    if b.shape != (th, tw):
        b = resize_bilinear_f32(b, th, tw)

    def unit(v):
        lo, hi = float(v.min()), float(v.max())
        if hi <= lo:
            return [0.0] * v.size
        return [(float(x) - lo) / (hi - lo) for x in v.ravel()]

    x, y = unit(a), unit(b)
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    vx = sum((u - mx) ** 2 for u in x) / n
    vy = sum((u - my) ** 2 for u in y) / n
    cov = sum((u - mx) * (w - my) for u, w in zip(x, y)) / n
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    value = (((2 * mx * my + c1) * (2 * cov + c2))
             / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return min(1.0, max(-1.0, value))


def test_ssim_self_symmetry(capfd):
    with _criterion(capfd, "ssim-self-symmetry") as problems:
        rng = np.random.default_rng(42)
        maps = [rng.normal(size=(rng.integers(4, 14), rng.integers(4, 14)))
                .astype(np.float32) for _ in range(100)]
        for idx, m in enumerate(maps):
            if abs(pruning.ssim(m, m) - 1.0) > 1e-9:
                problems.append(f"self similarity off at map {idx}")
                break
        for idx in range(0, 100, 2):
            a, b = maps[idx], maps[idx + 1]
            if abs(pruning.ssim(a, b) - pruning.ssim(b, a)) > 1e-9:
                problems.append(f"asymmetry at pair {idx}")
                break
        for idx in range(0, 100, 2):
            a, b = maps[idx], maps[idx + 1]
            if abs(pruning.ssim(a, b) - _reference_ssim(a, b)) > 1e-6:
                problems.append(f"reference formula mismatch at pair {idx}")
                break


# ---------------------------------------------------------------------------
# 4. two pruning rounds on a trained reference net

def test_pruning_trend(capfd, shape_net, pruned_shape):
    with _criterion(capfd, "pruning-trend") as problems:
        if shape_net.val_accuracy < 0.90:
            problems.append(f"val accuracy {shape_net.val_accuracy:.4f} "
                            "below 0.90")
        result = pruned_shape.result
        if len(result.rounds) != 2:
            problems.append(f"{len(result.rounds)} rounds ran, expected 2")
        blocks_before = len(shape_net.model.blocks)
        if len(result.model.blocks) != blocks_before - len(result.rounds):
            problems.append("each round must remove exactly one block")
        prev_params = refnet.param_count(shape_net.model)
        prev_flops = pruning.flops_estimate(shape_net.model)
        for r in result.rounds:
            if r.params_before != prev_params:
                problems.append(f"round {r.round}: params_before does not "
                                "chain")
            if not r.params_after < r.params_before:
                problems.append(f"round {r.round}: params did not decrease")
            if not r.flops_after < prev_flops:
                problems.append(f"round {r.round}: flops did not decrease")
            if r.val_accuracy < shape_net.val_accuracy - 0.10:
                problems.append(
                    f"round {r.round}: accuracy {r.val_accuracy:.4f} fell "
                    f"more than 10 points from {shape_net.val_accuracy:.4f}")
            prev_params = r.params_after
            prev_flops = r.flops_after
        budget = shape_net.train_seconds + pruned_shape.prune_seconds
        if budget >= 300:
            problems.append(f"train+prune took {budget:.0f}s (budget 300s)")


# ---------------------------------------------------------------------------
# 5. sliding windows tile the image exactly

def test_sliding_window_tiling(capfd):
    with _criterion(capfd, "sliding-window-tiling") as problems:
        t0 = time.perf_counter()
        for h in range(3, 31, 3):
            for w in range(3, 31, 3):
                boxes = localization.sliding_windows(h, w)
                if len(boxes) != 9:
                    problems.append(f"{len(boxes)} boxes at {(h, w)}")
                    continue
                cover = np.zeros((h, w), dtype=np.int64)
                for top, left, bh, bw in boxes:
                    cover[top:top + bh, left:left + bw] += 1
                if not np.all(cover == 1):
                    problems.append(f"windows do not tile {(h, w)}")
        elapsed = time.perf_counter() - t0
        if elapsed >= 1.0:
            problems.append(f"tiling sweep took {elapsed:.2f}s (budget 1s)")


# ---------------------------------------------------------------------------
# 6. connected components vs flood fill; opening idempotence

def _flood_fill_labels(mask):
    grid = mask.tolist()
    h = len(grid)
    w = len(grid[0])
    labels = [[0] * w for _ in range(h)]
    count = 0
    for r in range(h):
        for c in range(w):
            if grid[r][c] and not labels[r][c]:
                count += 1
                stack = [(r, c)]
                labels[r][c] = count
                while stack:
                    y, x = stack.pop()
                    for ny in range(max(y - 1, 0), min(y + 2, h)):
                        for nx in range(max(x - 1, 0), min(x + 2, w)):
                            if grid[ny][nx] and not labels[ny][nx]:
                                labels[ny][nx] = count
                                stack.append((ny, nx))
    return np.asarray(labels, dtype=np.int32), count


def test_morphology_oracles(capfd):
    with _criterion(capfd, "morphology-oracles") as problems:
        t0 = time.perf_counter()
        bits = ((np.arange(65536)[:, None] >> np.arange(16)) & 1)
        corpus = list(bits.astype(bool).reshape(-1, 4, 4))
        rng = np.random.default_rng(9)
        for _ in range(1000):
            corpus.append(rng.random((32, 32)) < rng.uniform(0.2, 0.8))

        bad_cc = bad_open = 0
        for mask in corpus:
            got_labels, got_count = localization.connected_components(mask)
            want_labels, want_count = _flood_fill_labels(mask)
            if got_count != want_count or not np.array_equal(got_labels,
                                                             want_labels):
                bad_cc += 1
            opened = localization.open_mask(mask)
            if not np.array_equal(localization.open_mask(opened), opened):
                bad_open += 1
        if bad_cc:
            problems.append(f"{bad_cc} masks disagree with the flood-fill "
                            "oracle")
        if bad_open:
            problems.append(f"opening not idempotent on {bad_open} masks")
        elapsed = time.perf_counter() - t0
        if elapsed >= 30.0:
            problems.append(f"corpus sweep took {elapsed:.1f}s (budget 30s)")


# ---------------------------------------------------------------------------
# 7. pooled fusion grows monotonically with n

def test_pooled_fusion_monotonicity(capfd):
    with _criterion(capfd, "pooled-fusion-monotonicity") as problems:
        rng = np.random.default_rng(13)
        alphabet = [f"item{i:02d}" for i in range(12)]

        def pool():
            return [(alphabet[rng.integers(len(alphabet))],
                     float(rng.random()))
                    for _ in range(rng.integers(0, 7))]

        t0 = time.perf_counter()
        for _ in range(1000):
            box_preds, window_preds = pool(), pool()
            truth = set(rng.choice(alphabet, size=rng.integers(1, 5),
                                   replace=False))
            prev_labels = set()
            prev_recall = 0.0
            for n in range(1, 6):
                fused = decision.fuse_pooled(box_preds, window_preds,
                                             top_n=n)
                labels = {label for label, _ in fused}
                if not prev_labels <= labels:
                    problems.append(f"label set shrank at n={n}")
                recall = len(labels & truth) / len(truth)
                if recall < prev_recall - 1e-12:
                    problems.append(f"recall decreased at n={n}")
                prev_labels, prev_recall = labels, recall
            if problems:
                break
        elapsed = time.perf_counter() - t0
        if elapsed >= 5.0:
            problems.append(f"pool sweep took {elapsed:.2f}s (budget 5s)")


# ---------------------------------------------------------------------------
# 8. end-to-end recognition beats the whole-segment baseline

def test_end_to_end_composites(capfd, item_net):
    with _criterion(capfd, "end-to-end-composites") as problems:
        model = item_net.model
        samples = synth.composite_dataset(20, seed=5)
        cfg2 = pipeline.RecognizeConfig(k=2, algorithm=2, top_n=2, seed=0)
        cfg1 = pipeline.RecognizeConfig(k=2, algorithm=1, seed=0)

        t0 = time.perf_counter()
        alg2, alg1, base = [], [], []
        for img, truth in samples:
            res2 = pipeline.recognize_image(model, img, cfg2)
            res1 = pipeline.recognize_image(model, img, cfg1)
            plain = pipeline.baseline_recognize(model, img, k=2, seed=0)
            alg2.append((truth, {lb for lb, _ in res2.labels}))
            alg1.append((truth, {lb for lb, _ in res1.labels}))
            base.append((truth, {lb for lb, _ in plain}))
        elapsed = time.perf_counter() - t0

        stats2 = evaluation.multilabel_report(alg2)
        stats1 = evaluation.multilabel_report(alg1)
        stats0 = evaluation.multilabel_report(base)
        if stats2["mean_f1"] < stats0["mean_f1"]:
            problems.append(
                f"fused mean F1 {stats2['mean_f1']:.4f} below baseline "
                f"{stats0['mean_f1']:.4f}")
        if stats2["mean_recall"] < stats1["mean_recall"]:
            problems.append(
                f"top-n mean recall {stats2['mean_recall']:.4f} below "
                f"consensus {stats1['mean_recall']:.4f}")
        budget = item_net.train_seconds + elapsed
        if budget >= 180:
            problems.append(f"end-to-end took {budget:.0f}s (budget 180s)")


# ---------------------------------------------------------------------------
# 9. serialized model reproduces forward outputs bit for bit

def test_interchange_round_trip(capfd, item_net, tmp_path):
    with _criterion(capfd, "interchange-round-trip") as problems:
        model = item_net.model
        out = str(tmp_path / "model")
        refnet.save_model(model, out)
        loaded = refnet.load_model(out)
        rng = np.random.default_rng(21)
        for _ in range(5):
            img = synth.ingredient_sample("bread", rng, 48)
            x = refnet.preprocess(img, model.input_size)
            if not np.array_equal(refnet.forward(model, x),
                                  refnet.forward(loaded, x)):
                problems.append("logits changed across save/load")
                break
            if not np.array_equal(refnet.classify_image(model, img),
                                  refnet.classify_image(loaded, img)):
                problems.append("probabilities changed across save/load")
                break


# ---------------------------------------------------------------------------
# 10. segment command timing: mean of 10, pruned no slower

def test_segment_timing(capfd, shape_net, pruned_shape, tmp_path):
    with _criterion(capfd, "segment-timing") as problems:
        if cli.TIMING_REPS != 10:
            problems.append(f"timing uses {cli.TIMING_REPS} reps, not 10")
        ds = str(tmp_path / "imgs")
        os.makedirs(ds)
        rng = np.random.default_rng(17)
        for i, name in enumerate(("red-square", "blue-disk", "yellow-disk")):
            write_image(os.path.join(ds, f"{i}.png"),
                        synth.shape_sample(name, rng))
        overall = {}
        for tag, model in (("full", shape_net.model),
                           ("pruned", pruned_shape.result.model)):
            model_dir = str(tmp_path / f"{tag}_model")
            refnet.save_model(model, model_dir)
            out = str(tmp_path / f"{tag}_out")
            cfg_path = str(tmp_path / f"{tag}.cfg")
            with open(cfg_path, "w", encoding="utf-8") as fh:
                fh.write(f"model = {model_dir}\ndataset = {ds}\n"
                         f"output = {out}\nsegment.k = 2\n")
            if cli.main(["segment", "--config", cfg_path]) != 0:
                problems.append(f"segment command failed for {tag} model")
                continue
            rows = open(os.path.join(out, "timing.csv"),
                        encoding="utf-8").read().splitlines()
            if rows[0] != "image,mean_seconds" or len(rows) != 5:
                problems.append(f"unexpected timing layout for {tag}")
                continue
            if not rows[-1].startswith("_overall,"):
                problems.append(f"missing overall mean for {tag}")
                continue
            overall[tag] = float(rows[-1].split(",")[1])
        if len(overall) == 2 and overall["pruned"] > overall["full"]:
            problems.append(
                f"pruned model slower: {overall['pruned']:.4f}s vs "
                f"{overall['full']:.4f}s")
