"""Exact k-nearest-neighbor scene retrieval over global image features.

Corpora at this scale are a few hundred images, so search is brute force
over Euclidean distances; ties break to the lower image id, which makes the
ranking canonical under any corpus permutation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .core import LabImage

GFEA_MAGIC = b"GFEA"
GFEC_MAGIC = b"GFEC"


@dataclass(frozen=True)
class RetrievalSet:
    """Nearest train images for one query: ids with their distances."""

    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if self.ids.shape != self.distances.shape or self.ids.ndim != 1:
            raise ValueError("ids and distances must be matching 1-D arrays")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("retrieved ids must be unique")
        if (np.diff(self.distances) < 0).any():
            raise ValueError("distances must be non-decreasing")

    def __len__(self) -> int:
        return len(self.ids)


def builtin_global_feature(image: LabImage) -> np.ndarray:
    """48-D descriptor: mean (L, a, b) over a 4x4 spatial grid, row-major."""
    h, w = image.height, image.width
    if h < 4 or w < 4:
        raise ValueError("image too small for the 4x4 grid descriptor")
    ys = np.arange(h) * 4 // h
    xs = np.arange(w) * 4 // w
    cell = (ys[:, None] * 4 + xs[None, :]).ravel()
    counts = np.bincount(cell, minlength=16)
    out = np.empty((16, 3), dtype=np.float64)
    for c in range(3):
        out[:, c] = (
            np.bincount(cell, weights=image.data[..., c].ravel(), minlength=16)
            / counts
        )
    return out.ravel()


def knn_retrieve(
    query: np.ndarray, corpus: np.ndarray, k: int, ids: np.ndarray | None = None
) -> RetrievalSet:
    """Top min(k, |corpus|) corpus rows by Euclidean distance to the query."""
    query = np.asarray(query, dtype=np.float64)
    corpus = np.asarray(corpus, dtype=np.float64)
    if corpus.ndim != 2 or len(corpus) == 0:
        raise ValueError("corpus must be a non-empty 2-D array")
    if query.shape != (corpus.shape[1],):
        raise ValueError(
            f"query dimension {query.shape} does not match corpus {corpus.shape[1]}"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    if ids is None:
        ids = np.arange(len(corpus))
    ids = np.asarray(ids)
    dists = np.sqrt(((corpus - query) ** 2).sum(axis=1))
    order = np.lexsort((ids, dists))[: min(k, len(corpus))]
    return RetrievalSet(ids=ids[order], distances=dists[order])


class NearestImageRetriever(BaseEstimator):
    """Estimator wrapper around the exact search: fit on the train corpus,
    then query per test image."""

    def __init__(self, k: int = 50):
        self.k = k

    def fit(self, corpus, ids=None):
        corpus = np.asarray(corpus, dtype=np.float64)
        if corpus.ndim != 2 or len(corpus) == 0:
            raise ValueError("corpus must be a non-empty 2-D array")
        if not np.isfinite(corpus).all():
            raise ValueError("corpus features must be finite")
        self.corpus_ = corpus
        self.ids_ = np.arange(len(corpus)) if ids is None else np.asarray(ids)
        return self

    def retrieve(self, query) -> RetrievalSet:
        if not hasattr(self, "corpus_"):
            raise ValueError("retriever is not fitted")
        return knn_retrieve(query, self.corpus_, self.k, self.ids_)


def save_feature(vector: np.ndarray, path) -> None:
    vector = np.asarray(vector, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(GFEA_MAGIC)
        fh.write(struct.pack("<I", vector.shape[0]))
        fh.write(vector.tobytes())


def load_feature(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != GFEA_MAGIC:
        raise ValueError(f"bad magic in feature file {path}")
    (dim,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 4 * dim:
        raise ValueError(f"truncated feature file {path}")
    return np.frombuffer(data, dtype="<f4", offset=8).astype(np.float64)


def save_feature_corpus(corpus: np.ndarray, path) -> None:
    corpus = np.asarray(corpus, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(GFEC_MAGIC)
        fh.write(struct.pack("<II", corpus.shape[0], corpus.shape[1]))
        fh.write(corpus.tobytes())


def load_feature_corpus(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != GFEC_MAGIC:
        raise ValueError(f"bad magic in feature corpus file {path}")
    count, dim = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * count * dim:
        raise ValueError(f"truncated feature corpus file {path}")
    return (
        np.frombuffer(data, dtype="<f4", offset=12)
        .reshape(count, dim)
        .astype(np.float64)
    )
