"""Input validation helpers shared by the estimator-style components."""

from __future__ import annotations

import numpy as np

SCORE_ROW_TOL = 1e-4


def check_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_score_matrix(scores, n_classes: int | None = None) -> np.ndarray:
    """Validate rows as probability vectors (non-negative, sum 1 within tol)."""
    scores = np.asarray(scores)
    if scores.ndim != 2:
        raise ValueError(f"expected a 2-D score matrix, got shape {scores.shape}")
    if n_classes is not None and scores.shape[1] != n_classes:
        raise ValueError(f"expected {n_classes} classes, got {scores.shape[1]}")
    if np.isnan(scores).any():
        raise ValueError("score matrix contains NaN")
    if (scores < 0).any():
        raise ValueError("score matrix contains negative entries")
    sums = scores.sum(axis=1, dtype=np.float64)
    bad = np.abs(sums - 1.0) > SCORE_ROW_TOL
    if bad.any():
        row = int(np.nonzero(bad)[0][0])
        raise ValueError(f"score row {row} sums to {sums[row]:.6g}, not 1")
    return scores


def check_labeling(labels, n_nodes: int, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n_nodes,):
        raise ValueError(f"labeling must have shape ({n_nodes},)")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
        raise ValueError("labeling contains out-of-range class indices")
    return labels.astype(np.int32)
