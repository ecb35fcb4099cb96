import numpy as np
import pytest

from foodrec import refnet

CLASSES = ["apple", "bean", "corn", "background"]


def tiny_model(seed=0):
    return refnet.build_model(CLASSES, input_size=8, seed=seed,
                              stem_channels=4, stage_widths=(6,),
                              blocks_per_stage=2)


def rand_images(n, size, seed):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(n, size, size, 3), dtype=np.uint8)


class TestBuildAndCount:
    def test_reference_structure(self):
        m = refnet.build_reference_model(CLASSES)
        assert len(m.blocks) == 12
        assert sum(b.prunable for b in m.blocks) == 8
        assert [b.stride for b in m.blocks] == [2, 1, 1] * 4

    def test_param_count_hand_oracle_tiny(self):
        m = tiny_model()
        # stem 4*3*9+4*4, block0 6*4*9+24, block1 6*6*9+24, head 4*6+4
        want = (108 + 16) + (216 + 24) + (324 + 24) + (24 + 4)
        assert refnet.param_count(m) == want

    def test_param_count_head_only(self):
        m = refnet.Model(4, CLASSES, None, [],
                         np.zeros((4, 3), np.float32),
                         np.zeros(4, np.float32)).validate()
        assert refnet.param_count(m) == 16

    def test_validate_rejects_bad_prunable_flag(self):
        m = tiny_model()
        m.blocks[0].prunable = True  # stride-2 block must not be prunable
        with pytest.raises(ValueError):
            m.validate()

    def test_validate_requires_background(self):
        with pytest.raises(ValueError):
            refnet.build_model(["a", "b"], input_size=8, stem_channels=4,
                               stage_widths=(6,), blocks_per_stage=1)


class TestForward:
    def test_probabilities_normalized(self):
        m = tiny_model()
        x = refnet.preprocess(rand_images(1, 8, 0)[0], 8)
        p = refnet.forward(m, x)
        assert p.shape == (4,)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p >= 0)

    def test_batch_matches_single(self):
        m = tiny_model()
        imgs = rand_images(3, 8, 1)
        xb = np.stack([refnet.preprocess(im, 8) for im in imgs])
        batch = refnet.forward_batch(m, xb)
        for i in range(3):
            single = refnet.forward(m, xb[i])
            assert np.allclose(batch[i], single, atol=1e-6)

    def test_classify_resizes_any_input(self):
        m = tiny_model()
        p = refnet.classify_image(m, rand_images(1, 30, 2)[0])
        assert p.shape == (4,)

    def test_feature_maps_shapes(self):
        m = tiny_model()
        maps = refnet.block_feature_maps(
            m, refnet.preprocess(rand_images(1, 8, 3)[0], 8))
        assert [mm.shape for mm in maps] == [(6, 2, 2), (6, 2, 2)]

    def test_wrong_input_shape_rejected(self):
        with pytest.raises(ValueError):
            refnet.forward(tiny_model(), np.zeros((3, 5, 5), np.float32))


class TestTrainingGradients:
    def test_sgd_step_gradient_matches_finite_difference(self):
        """(param_before - param_after) / lr equals the numeric gradient of
        the batch-statistics loss, checked on sampled coordinates of every
        parameter tensor."""
        m = tiny_model(seed=5)
        rng = np.random.default_rng(6)
        xb = rng.normal(size=(4, 3, 8, 8)).astype(np.float32)
        yb = np.array([0, 1, 2, 3])
        lr = 1e-3

        def train_loss(model):
            h = xb
            caches = []
            stem_out, _ = refnet._unit_train_forward(h, model.stem, 2)
            h = stem_out
            for blk in model.blocks:
                y, _ = refnet._unit_train_forward(h, blk.weights, blk.stride)
                h = h + y if blk.prunable else y
            pooled = h.mean(axis=(2, 3))
            logits = pooled @ model.head_w.T + model.head_b
            probs = refnet._softmax(logits)
            return float(-np.mean(np.log(
                probs[np.arange(len(yb)), yb] + 1e-12)))

        stepped = m.copy()
        refnet._train_step(stepped, xb, yb, np.float32(lr))

        def tensors(model):
            out = [("head_w", model.head_w), ("head_b", model.head_b),
                   ("stem.w", model.stem.conv_w),
                   ("stem.scale", model.stem.scale),
                   ("stem.shift", model.stem.shift)]
            for b in model.blocks:
                out.append((f"b{b.index}.w", b.weights.conv_w))
                out.append((f"b{b.index}.scale", b.weights.scale))
                out.append((f"b{b.index}.shift", b.weights.shift))
            return dict(out)


        before = tensors(m)
        after = tensors(stepped)
        eps = 3e-3
        check_rng = np.random.default_rng(7)
        for name in before:
            flat_before = before[name].reshape(-1)
            flat_after = after[name].reshape(-1)
            n_coords = min(4, flat_before.size)
            coords = check_rng.choice(flat_before.size, size=n_coords,
                                      replace=False)
            for ci in coords:
                analytic = float(flat_before[ci] - flat_after[ci]) / lr
                probe = m.copy()
                tensors(probe)[name].reshape(-1)[ci] += eps
                lp = train_loss(probe)
                probe = m.copy()
                tensors(probe)[name].reshape(-1)[ci] -= eps
                lm = train_loss(probe)
                numeric = (lp - lm) / (2 * eps)
                assert analytic == pytest.approx(numeric, abs=2e-2), \
                    f"{name}[{ci}]: analytic {analytic} vs {numeric}"

    def test_head_gradients_match_finite_difference_eval_mode(self):
        m = tiny_model(seed=8)
        samples = [(img, CLASSES[i % 4])
                   for i, img in enumerate(rand_images(6, 8, 9))]
        loss, dw, db = refnet.loss_and_head_grads(m, samples)
        assert loss == pytest.approx(refnet.mean_cross_entropy(m, samples),
                                     abs=1e-9)
        eps = 1e-4
        rng = np.random.default_rng(10)
        for _ in range(4):
            i = int(rng.integers(m.head_w.shape[0]))
            j = int(rng.integers(m.head_w.shape[1]))
            probe = m.copy()
            probe.head_w[i, j] += eps
            lp = refnet.mean_cross_entropy(probe, samples)
            probe.head_w[i, j] -= 2 * eps
            lm = refnet.mean_cross_entropy(probe, samples)
            assert dw[i, j] == pytest.approx((lp - lm) / (2 * eps),
                                             abs=1e-3)

    def test_training_reduces_loss_and_is_deterministic(self):
        m = tiny_model(seed=11)
        rng = np.random.default_rng(12)
        samples = []
        for i, name in enumerate(CLASSES):
            for _ in range(6):
                img = np.full((8, 8, 3), 40 + 60 * i, dtype=np.uint8)
                img = img + rng.integers(0, 10, size=img.shape,
                                         dtype=np.uint8)
                samples.append((img, name))
        cfg = refnet.TrainConfig(epochs=8, batch_size=8,
                                 learning_rate=0.05, seed=13)
        before = refnet.mean_cross_entropy(m, samples)
        t1 = refnet.train(m, samples, cfg)
        t2 = refnet.train(m, samples, cfg)
        after = refnet.mean_cross_entropy(t1, samples)
        assert after < before
        assert np.array_equal(t1.head_w, t2.head_w)
        assert all(np.array_equal(a.weights.conv_w, b.weights.conv_w)
                   for a, b in zip(t1.blocks, t2.blocks))
        # the original model is untouched
        assert refnet.mean_cross_entropy(m, samples) == pytest.approx(
            before, abs=1e-12)

    def test_running_stats_update_in_train_mode_only(self):
        m = tiny_model(seed=14)
        rm_before = m.stem.running_mean.copy()
        x = refnet.preprocess(rand_images(1, 8, 15)[0], 8)
        refnet.forward(m, x)
        assert np.array_equal(m.stem.running_mean, rm_before)
        samples = [(rand_images(1, 8, 16)[0], "apple")] * 4
        refnet.train(m, samples, refnet.TrainConfig(epochs=1, batch_size=4,
                                                    learning_rate=0.01,
                                                    seed=0))
        assert np.array_equal(m.stem.running_mean, rm_before)


class TestRemoveBlock:
    def test_removes_and_reindexes(self):
        m = refnet.build_reference_model(CLASSES)
        out = refnet.remove_block(m, 4)
        assert len(out.blocks) == 11
        assert [b.index for b in out.blocks] == list(range(11))
        assert refnet.param_count(out) < refnet.param_count(m)

    def test_rejects_non_prunable(self):
        m = refnet.build_reference_model(CLASSES)
        with pytest.raises(ValueError):
            refnet.remove_block(m, 0)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            refnet.remove_block(tiny_model(), 99)

    def test_forward_still_works_after_removal(self):
        m = refnet.build_reference_model(CLASSES)
        out = refnet.remove_block(m, 2)
        p = refnet.classify_image(out, rand_images(1, 64, 17)[0])
        assert p.sum() == pytest.approx(1.0, abs=1e-9)


class TestInterchange:
    def test_round_trip_bit_identical(self, tmp_path):
        m = tiny_model(seed=18)
        refnet.save_model(m, tmp_path / "m")
        loaded = refnet.load_model(tmp_path / "m")
        assert loaded.class_names == m.class_names
        assert loaded.input_size == m.input_size
        assert np.array_equal(loaded.head_w, m.head_w)
        for a, b in zip(loaded.blocks, m.blocks):
            assert a.prunable == b.prunable and a.stride == b.stride
            assert np.array_equal(a.weights.conv_w, b.weights.conv_w)
        x = refnet.preprocess(rand_images(1, 8, 19)[0], 8)
        assert np.array_equal(refnet.forward(m, x),
                              refnet.forward(loaded, x))

    def test_save_is_byte_stable(self, tmp_path):
        m = tiny_model(seed=20)
        refnet.save_model(m, tmp_path / "a")
        refnet.save_model(m, tmp_path / "b")
        ma = (tmp_path / "a" / "manifest.txt").read_bytes()
        mb = (tmp_path / "b" / "manifest.txt").read_bytes()
        assert ma == mb
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_manifest_grammar(self, tmp_path):
        m = tiny_model(seed=21)
        refnet.save_model(m, tmp_path / "m")
        lines = (tmp_path / "m" / "manifest.txt").read_text().splitlines()
        assert lines[0] == "format 1"
        assert lines[1] == "input_size 8"
        assert "class 3 background" in lines
        assert any(ln.startswith("block 1 0 6 6 1 1") for ln in lines)
        assert any(ln.startswith("tensor stem.conv.weight 4x3x3x3 ")
                   for ln in lines)

    def test_class_names_with_spaces_round_trip(self, tmp_path):
        m = refnet.build_model(["meat product", "fresh fruit",
                                "background"], input_size=8,
                               stem_channels=4, stage_widths=(6,),
                               blocks_per_stage=1)
        refnet.save_model(m, tmp_path / "m")
        loaded = refnet.load_model(tmp_path / "m")
        assert loaded.class_names == ["meat product", "fresh fruit",
                                      "background"]

    def test_truncated_tensor_rejected(self, tmp_path):
        m = tiny_model(seed=22)
        refnet.save_model(m, tmp_path / "m")
        f = tmp_path / "m" / "head.bias.bin"
        f.write_bytes(f.read_bytes()[:-4])
        with pytest.raises(ValueError, match="head.bias"):
            refnet.load_model(tmp_path / "m")

    def test_missing_tensor_rejected(self, tmp_path):
        m = tiny_model(seed=23)
        refnet.save_model(m, tmp_path / "m")
        manifest = tmp_path / "m" / "manifest.txt"
        text = "\n".join(ln for ln in manifest.read_text().splitlines()
                         if "head.weight" not in ln) + "\n"
        manifest.write_text(text)
        with pytest.raises(ValueError, match="head.weight"):
            refnet.load_model(tmp_path / "m")

    def test_bad_format_line_rejected(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        (d / "manifest.txt").write_text("format 2\n")
        with pytest.raises(ValueError, match="format 1"):
            refnet.load_model(d)
