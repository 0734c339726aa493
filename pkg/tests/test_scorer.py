import itertools

import numpy as np
import pytest

from streetlabel.core import LabImage, rgb_to_lab
from streetlabel.scorer import (
    BaselineScorer,
    argmax_labeling,
    build_masked_image,
    extract_features,
    load_model,
    load_scores,
    save_model,
    save_scores,
    softmax,
)
from streetlabel.slic import SuperpixelMap


def two_segment_map(size=256, split=128):
    assignment = np.zeros((size, size), dtype=np.int32)
    assignment[:, split:] = 1
    return SuperpixelMap(assignment=assignment)


class TestMaskedImage:
    def test_full_image_segment_is_identity(self):
        rng = np.random.default_rng(0)
        rgb = rng.integers(1, 255, (256, 256, 3)).astype(np.uint8)
        spx = SuperpixelMap(assignment=np.zeros((256, 256), dtype=np.int32))
        out = build_masked_image(rgb, spx, 0)
        assert np.array_equal(out, rgb)

    def test_small_segment_exact_pixels(self):
        rgb = np.full((256, 256, 3), 200, dtype=np.uint8)
        assignment = np.zeros((256, 256), dtype=np.int32)
        assignment[10, 20:30] = 1  # 10 pixels
        spx = SuperpixelMap(assignment=assignment)
        out = build_masked_image(rgb, spx, 1)
        nonblack = np.nonzero(out.any(axis=2))
        assert len(nonblack[0]) == 10
        assert (nonblack[0] == 10).all()
        assert set(nonblack[1]) == set(range(20, 30))

    def test_invalid_segment_id(self):
        rgb = np.zeros((256, 256, 3), dtype=np.uint8)
        spx = two_segment_map()
        with pytest.raises(ValueError, match="invalid segment id"):
            build_masked_image(rgb, spx, 5)

    def test_random_shift_deterministic_and_contained(self):
        rng = np.random.default_rng(1)
        rgb = rng.integers(1, 255, (256, 256, 3)).astype(np.uint8)
        assignment = np.zeros((256, 256), dtype=np.int32)
        assignment[100:120, 30:50] = 1
        spx = SuperpixelMap(assignment=assignment)
        a = build_masked_image(rgb, spx, 1, shift_seed=7)
        b = build_masked_image(rgb, spx, 1, shift_seed=7)
        assert np.array_equal(a, b)
        ys, xs = np.nonzero(a.any(axis=2))
        assert len(ys) == 400  # segment fully inside the frame
        assert ys.min() >= 0 and ys.max() < 256 and xs.min() >= 0 and xs.max() < 256

    def test_non_256_input_is_resized(self):
        rgb = np.full((64, 64, 3), 90, dtype=np.uint8)
        spx = SuperpixelMap(assignment=np.zeros((64, 64), dtype=np.int32))
        out = build_masked_image(rgb, spx, 0)
        assert out.shape == (256, 256, 3)


class TestFeatures:
    def test_uniform_image_zero_std(self):
        img = rgb_to_lab(np.full((32, 32, 3), 128, dtype=np.uint8))
        spx = SuperpixelMap(assignment=(np.arange(1024) // 256).reshape(32, 32).astype(np.int32))
        feats = extract_features(img, spx)
        assert np.allclose(feats[:, 3:6], 0.0, atol=1e-9)

    def test_full_image_segment_centroid_and_area(self):
        w = h = 64
        img = rgb_to_lab(np.full((h, w, 3), 70, dtype=np.uint8))
        spx = SuperpixelMap(assignment=np.zeros((h, w), dtype=np.int32))
        feats = extract_features(img, spx)
        assert abs(feats[0, 6] - 0.5 * (w - 1) / w) < 1e-12
        assert abs(feats[0, 7] - 0.5 * (h - 1) / h) < 1e-12
        assert abs(feats[0, 8] - 1.0) < 1e-12

    def test_quadrant_centroid(self):
        # mean of coordinates 0..31 divided by 64
        img = rgb_to_lab(np.full((64, 64, 3), 70, dtype=np.uint8))
        assignment = np.ones((64, 64), dtype=np.int32)
        assignment[:32, :32] = 0
        # make segment 1 connected: it already is (L-shape)
        spx = SuperpixelMap(assignment=assignment)
        feats = extract_features(img, spx)
        assert abs(feats[0, 6] - 15.5 / 64) < 1e-12
        assert abs(feats[0, 7] - 15.5 / 64) < 1e-12

    def test_shift_moves_only_centroids(self):
        img = rgb_to_lab(np.random.default_rng(0).integers(0, 255, (32, 32, 3)).astype(np.uint8))
        assignment = (np.arange(1024) // 128).reshape(32, 32).astype(np.int32)
        spx = SuperpixelMap(assignment=assignment)
        plain = extract_features(img, spx)
        shifted = extract_features(img, spx, shift_rng=np.random.default_rng(5))
        again = extract_features(img, spx, shift_rng=np.random.default_rng(5))
        assert np.array_equal(shifted, again)
        assert np.allclose(plain[:, :6], shifted[:, :6])
        assert np.allclose(plain[:, 8:], shifted[:, 8:])
        assert not np.allclose(plain[:, 6:8], shifted[:, 6:8])
        assert (shifted[:, 6] >= 0).all() and (shifted[:, 6] <= 1).all()

    def test_dimension_mismatch(self):
        img = rgb_to_lab(np.full((8, 8, 3), 1, dtype=np.uint8))
        spx = SuperpixelMap(assignment=np.zeros((4, 4), dtype=np.int32))
        with pytest.raises(ValueError, match="dimensions"):
            extract_features(img, spx)


def synthetic_band_features(rng, n=200, separable_by=6):
    """Two classes whose only difference is one feature column."""
    X = np.zeros((n, 10))
    X[:, 0] = rng.uniform(30, 70, n)  # mean L
    X[:, 9] = 1.0  # aspect
    X[:, 8] = 0.3
    y = rng.integers(1, 3, n)
    X[:, separable_by] = np.where(y == 1, rng.uniform(0.0, 0.4, n), rng.uniform(0.6, 1.0, n))
    return X, y


class TestBaselineScorer:
    def test_separable_reaches_full_training_accuracy(self):
        X, y = synthetic_band_features(np.random.default_rng(0), separable_by=7)
        model = BaselineScorer(epochs=500).fit(X, y, n_classes=3)
        assert (model.predict(X) == y).all()

    def test_zero_epochs_gives_uniform_scores(self):
        X, y = synthetic_band_features(np.random.default_rng(1))
        model = BaselineScorer(epochs=0).fit(X, y, n_classes=4)
        probs = model.predict_proba(X)
        assert np.allclose(probs, 0.25, atol=1e-12)

    def test_duplication_invariance(self):
        X, y = synthetic_band_features(np.random.default_rng(2))
        m1 = BaselineScorer(epochs=50).fit(X, y, n_classes=3)
        m2 = BaselineScorer(epochs=50).fit(
            np.vstack([X, X]), np.concatenate([y, y]), n_classes=3
        )
        assert np.abs(m1.weights_ - m2.weights_).max() <= 1e-9

    def test_loss_non_increasing(self):
        X, y = synthetic_band_features(np.random.default_rng(3))
        model = BaselineScorer(epochs=200).fit(X, y, n_classes=3)
        diffs = np.diff(model.loss_history_)
        assert (diffs <= 1e-12).all()

    def test_score_rows_sum_to_one(self):
        X, y = synthetic_band_features(np.random.default_rng(4))
        model = BaselineScorer(epochs=20).fit(X, y, n_classes=3)
        probs = model.predict_proba(X)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-12
        assert (probs >= 0).all()

    def test_label_range_validated(self):
        X, _ = synthetic_band_features(np.random.default_rng(5))
        with pytest.raises(ValueError):
            BaselineScorer(epochs=1).fit(X, np.full(len(X), 9), n_classes=3)


class TestSoftmax:
    def test_known_logits(self):
        probs = softmax(np.array([[np.log(2.0), 0.0, 0.0]]))
        assert np.allclose(probs, [[0.5, 0.25, 0.25]], atol=1e-12)

    def test_shift_invariance(self):
        logits = np.array([[0.3, -1.2, 2.0]])
        assert np.allclose(softmax(logits), softmax(logits + 17.0), atol=1e-12)


class TestArgmax:
    def test_plain(self):
        assert argmax_labeling(np.array([[0.2, 0.7, 0.1]]))[0] == 1

    def test_tie_to_lowest(self):
        assert argmax_labeling(np.array([[0.5, 0.5]]))[0] == 0

    def test_permutation_coherence(self):
        row = np.array([0.6, 0.25, 0.1, 0.05])
        for perm in itertools.permutations(range(4)):
            permuted = row[list(perm)]
            assert permuted[argmax_labeling(permuted[None, :])[0]] == 0.6


class TestScoreIO:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        scores = rng.dirichlet(np.ones(5), size=20)
        path = tmp_path / "s.spsc"
        save_scores(scores, path)
        loaded = load_scores(path)
        assert loaded.dtype == np.float32
        assert np.array_equal(loaded, scores.astype(np.float32))

    def test_tolerated_row_is_renormalized(self, tmp_path):
        scores = np.array([[0.50005, 0.5]], dtype=np.float32)  # sums to 1.00005
        path = tmp_path / "s.spsc"
        save_scores(scores.astype(np.float64), path)
        loaded = load_scores(path)
        assert abs(loaded.sum() - 1.0) < 1e-6

    def test_bad_row_rejected_with_index(self, tmp_path):
        import struct

        path = tmp_path / "bad.spsc"
        arr = np.array([[0.5, 0.5], [0.25, 0.25]], dtype="<f4")
        with open(path, "wb") as fh:
            fh.write(b"SPSC")
            fh.write(struct.pack("<III", 1, 2, 2))
            fh.write(arr.tobytes())
        with pytest.raises(ValueError, match="row 1"):
            load_scores(path)

    def test_nan_rejected(self, tmp_path):
        import struct

        path = tmp_path / "nan.spsc"
        arr = np.array([[np.nan, 1.0]], dtype="<f4")
        with open(path, "wb") as fh:
            fh.write(b"SPSC")
            fh.write(struct.pack("<III", 1, 1, 2))
            fh.write(arr.tobytes())
        with pytest.raises(ValueError, match="NaN"):
            load_scores(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.spsc"
        path.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(ValueError, match="bad magic"):
            load_scores(path)

    def test_writer_validates(self, tmp_path):
        with pytest.raises(ValueError):
            save_scores(np.array([[0.9, 0.3]]), tmp_path / "no.spsc")


class TestModelIO:
    def test_round_trip_predictions(self, tmp_path):
        X, y = synthetic_band_features(np.random.default_rng(6))
        model = BaselineScorer(epochs=80).fit(X, y, n_classes=3)
        path = tmp_path / "m.bmdl"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.n_classes_ == 3
        assert np.array_equal(
            loaded.weights_, model.weights_.astype(np.float32).astype(np.float64)
        )

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.bmdl"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(ValueError, match="bad magic"):
            load_model(path)
