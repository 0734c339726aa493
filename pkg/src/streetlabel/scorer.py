"""Per-superpixel label scoring.

Two providers feed the rest of the pipeline: a built-in location-aware
multinomial logistic regression over 10 cheap per-segment statistics, and a
binary score-file loader (SPSC) for externally computed softmax scores. The
masked-image builder keeps one segment at its original position on a black
256x256 canvas, which is how location enters an appearance-only scorer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .core import LabImage
from .slic import SuperpixelMap
from .validation import check_feature_matrix, check_score_matrix

SPSC_MAGIC = b"SPSC"
BMDL_MAGIC = b"BMDL"
N_FEATURES = 10

def _standardize(X: np.ndarray) -> np.ndarray:
    """Fixed feature transform baked into the model definition: roughly
    zero-centered unit-range inputs so the default learning rate converges
    within the default epoch budget. Model weights are defined over this
    transformed basis."""
    Z = np.empty_like(X)
    Z[:, 0] = (X[:, 0] - 50.0) / 25.0
    Z[:, 1] = X[:, 1] / 20.0
    Z[:, 2] = X[:, 2] / 20.0
    Z[:, 3:6] = X[:, 3:6] / 10.0
    Z[:, 6] = (X[:, 6] - 0.5) * 2.0
    Z[:, 7] = (X[:, 7] - 0.5) * 2.0
    Z[:, 8] = X[:, 8] * 2.0
    Z[:, 9] = np.log(X[:, 9])
    return Z


def build_masked_image(
    rgb: np.ndarray,
    spx: SuperpixelMap,
    segment_id: int,
    shift_seed: int | None = None,
    out_size: int = 256,
) -> np.ndarray:
    """One segment of the source image on a black canvas, at its original
    location (or a random fully-contained location when shifting).

    The source raster and assignment are resized to `out_size` first
    (bilinear / nearest) when they are not already that size.
    """
    if not (0 <= segment_id < spx.n_segments):
        raise ValueError(f"invalid segment id {segment_id}")
    if rgb.shape[:2] != (spx.height, spx.width):
        raise ValueError("image and superpixel map dimensions do not match")
    if rgb.shape[:2] != (out_size, out_size):
        from PIL import Image

        rgb = np.asarray(
            Image.fromarray(rgb, "RGB").resize((out_size, out_size), Image.BILINEAR)
        )
        assignment = np.asarray(
            Image.fromarray(spx.assignment.astype(np.int32), "I").resize(
                (out_size, out_size), Image.NEAREST
            )
        )
    else:
        assignment = spx.assignment

    mask = assignment == segment_id
    out = np.zeros((out_size, out_size, 3), dtype=np.uint8)
    if shift_seed is None:
        out[mask] = rgb[mask]
        return out

    ys, xs = np.nonzero(mask)
    rng = np.random.default_rng([shift_seed, segment_id])
    lim = out_size - 1
    while True:
        dx, dy = rng.integers(-lim, lim + 1, size=2)
        if (
            xs.min() + dx >= 0
            and xs.max() + dx < out_size
            and ys.min() + dy >= 0
            and ys.max() + dy < out_size
        ):
            break
    out[ys + dy, xs + dx] = rgb[ys, xs]
    return out


def extract_features(
    image: LabImage,
    spx: SuperpixelMap,
    shift_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """10 statistics per segment: mean and std of (L, a, b), normalized
    centroid, normalized sqrt-area, and bounding-box aspect ratio.

    With `shift_rng`, centroids are moved by a random offset drawn until the
    segment's bounding box stays inside the frame, which destroys the
    location signal while keeping appearance intact.
    """
    if image.data.shape[:2] != spx.assignment.shape:
        raise ValueError("image and superpixel map dimensions do not match")
    h, w = spx.assignment.shape
    n = spx.n_segments
    flat = spx.assignment.ravel()
    counts = spx.pixel_counts
    feats = np.empty((n, N_FEATURES), dtype=np.float64)
    for c in range(3):
        vals = image.data[..., c].ravel()
        mean = np.bincount(flat, weights=vals, minlength=n) / counts
        centered = vals - mean[flat]
        var = np.bincount(flat, weights=centered * centered, minlength=n) / counts
        feats[:, c] = mean
        feats[:, 3 + c] = np.sqrt(var)
    cx = spx.centroids[:, 0].copy()
    cy = spx.centroids[:, 1].copy()
    if shift_rng is not None:
        for i in range(n):
            x0, y0, x1, y1 = spx.bboxes[i]
            while True:
                dx, dy = shift_rng.integers(-(w - 1), w), shift_rng.integers(
                    -(h - 1), h
                )
                if x0 + dx >= 0 and x1 + dx < w and y0 + dy >= 0 and y1 + dy < h:
                    break
            cx[i] += dx
            cy[i] += dy
    feats[:, 6] = cx / w
    feats[:, 7] = cy / h
    feats[:, 8] = np.sqrt(counts / (w * h))
    box_w = spx.bboxes[:, 2] - spx.bboxes[:, 0] + 1
    box_h = spx.bboxes[:, 3] - spx.bboxes[:, 1] + 1
    feats[:, 9] = box_w / box_h
    return feats


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def argmax_labeling(scores: np.ndarray) -> np.ndarray:
    """Per row, the index of the largest score; ties go to the lowest index."""
    scores = check_score_matrix(scores)
    return np.argmax(scores, axis=1).astype(np.int32)


class BaselineScorer(BaseEstimator):
    """Multinomial logistic regression trained by full-batch gradient
    descent on mean softmax cross-entropy. Weights start at zero, so the
    loss trajectory is deterministic and duplication-invariant.
    """

    def __init__(self, learning_rate: float = 0.1, epochs: int = 500, seed: int = 42):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed

    def _scaled_bias(self, X: np.ndarray) -> np.ndarray:
        Xs = _standardize(X)
        return np.hstack([Xs, np.ones((len(Xs), 1))])

    def fit(self, X, y, n_classes: int | None = None):
        X = check_feature_matrix(X, N_FEATURES)
        y = np.asarray(y, dtype=np.int64)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        if len(X) == 0:
            raise ValueError("cannot fit on an empty training set")
        self.n_classes_ = int(n_classes if n_classes is not None else y.max() + 1)
        if y.min() < 0 or y.max() >= self.n_classes_:
            raise ValueError("label outside the class range")
        Xb = self._scaled_bias(X)
        onehot = np.zeros((len(y), self.n_classes_))
        onehot[np.arange(len(y)), y] = 1.0
        W = np.zeros((self.n_classes_, Xb.shape[1]))
        losses = []
        for _ in range(self.epochs):
            probs = softmax(Xb @ W.T)
            losses.append(-np.mean(np.log(probs[np.arange(len(y)), y])))
            W -= self.learning_rate * ((probs - onehot).T @ Xb) / len(y)
        probs = softmax(Xb @ W.T)
        losses.append(-np.mean(np.log(probs[np.arange(len(y)), y])))
        self.weights_ = W
        self.loss_history_ = losses
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = check_feature_matrix(X, N_FEATURES)
        if not hasattr(self, "weights_"):
            raise ValueError("scorer is not fitted")
        return softmax(self._scaled_bias(X) @ self.weights_.T)

    def predict(self, X) -> np.ndarray:
        return argmax_labeling(self.predict_proba(X))


def save_model(model: BaselineScorer, path) -> None:
    W = model.weights_.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(BMDL_MAGIC)
        fh.write(struct.pack("<II", W.shape[0], W.shape[1]))
        fh.write(W.tobytes())


def load_model(path) -> BaselineScorer:
    data = Path(path).read_bytes()
    if data[:4] != BMDL_MAGIC:
        raise ValueError(f"bad magic in model file {path}")
    n_classes, n_features = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * n_classes * n_features:
        raise ValueError(f"truncated model file {path}")
    W = (
        np.frombuffer(data, dtype="<f4", offset=12)
        .reshape(n_classes, n_features)
        .astype(np.float64)
    )
    model = BaselineScorer()
    model.weights_ = W
    model.n_classes_ = n_classes
    return model


def save_scores(scores: np.ndarray, path) -> None:
    """Write a score matrix as SPSC: magic, version, counts, f32 rows."""
    scores = check_score_matrix(scores)
    arr = scores.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(SPSC_MAGIC)
        fh.write(struct.pack("<III", 1, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def load_scores(path) -> np.ndarray:
    """Read an SPSC score file.

    Rows whose sum drifts from 1 by more than float32 round-off (1e-6) but
    at most 1e-4 are renormalized; anything worse is rejected, so a clean
    write/read cycle is bit-exact.
    """
    data = Path(path).read_bytes()
    if data[:4] != SPSC_MAGIC:
        raise ValueError(f"bad magic in score file {path}")
    version, n_rows, n_cols = struct.unpack_from("<III", data, 4)
    if version != 1:
        raise ValueError(f"unsupported score file version {version}")
    if len(data) != 16 + 4 * n_rows * n_cols:
        raise ValueError(f"truncated score file {path}")
    scores = (
        np.frombuffer(data, dtype="<f4", offset=16).reshape(n_rows, n_cols).copy()
    )
    if np.isnan(scores).any():
        raise ValueError(f"NaN score entries in {path}")
    sums = scores.sum(axis=1, dtype=np.float64)
    dev = np.abs(sums - 1.0)
    if (dev > 1e-4).any():
        row = int(np.nonzero(dev > 1e-4)[0][0])
        raise ValueError(f"score row {row} sums to {sums[row]:.6g} in {path}")
    fix = dev > 1e-6
    if fix.any():
        scores[fix] = (scores[fix].astype(np.float64) / sums[fix, None]).astype(
            np.float32
        )
    return scores
