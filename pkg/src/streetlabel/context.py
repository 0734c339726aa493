"""Superpixel adjacency and label co-occurrence statistics.

The conditional matrix P[i][j] = P(label i | adjacent label j) is estimated
by counting adjacent majority-label pairs over a retrieval set, Laplace
smoothing, flooring, and renormalizing columns. The floor keeps -log P
finite, which the refinement energy needs to stay semi-metric.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .core import VOID_INDEX, ClassTable
from .retrieval import RetrievalSet
from .slic import SuperpixelMap


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected superpixel adjacency: unique (a, b) pairs with a < b."""

    n_nodes: int
    edges: np.ndarray

    def __post_init__(self):
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError("edges must be an (m, 2) array")
        if len(e):
            if (e[:, 0] >= e[:, 1]).any():
                raise ValueError("edges must satisfy a < b (no self-loops)")
            if e.max() >= self.n_nodes or e.min() < 0:
                raise ValueError("edge endpoint out of range")
            if len(np.unique(e, axis=0)) != len(e):
                raise ValueError("duplicate edges")


@dataclass(frozen=True)
class CooccurrenceModel:
    """Column-stochastic conditional probabilities with smoothing metadata."""

    matrix: np.ndarray  # matrix[i, j] = P(label i | neighbor label j)
    alpha: float
    floor: float

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("co-occurrence matrix must be square")
        if np.abs(m.sum(axis=0) - 1.0).max() > 1e-9:
            raise ValueError("columns must sum to 1")

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]


def build_adjacency(spx: SuperpixelMap) -> AdjacencyGraph:
    """Edge (a, b) iff some pixel of a is 4-connected to some pixel of b."""
    a = spx.assignment
    right = np.stack([a[:, :-1].ravel(), a[:, 1:].ravel()], axis=1)
    down = np.stack([a[:-1, :].ravel(), a[1:, :].ravel()], axis=1)
    pairs = np.concatenate([right, down])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        return AdjacencyGraph(spx.n_segments, np.empty((0, 2), dtype=np.int64))
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    return AdjacencyGraph(spx.n_segments, pairs.astype(np.int64))


def count_adjacent_labels(
    graph: AdjacencyGraph, majority: np.ndarray, n_classes: int
) -> np.ndarray:
    """Symmetric pair counts over non-void edges: each unordered edge with
    labels {i, j} adds one to both c[i, j] and c[j, i]."""
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    if len(graph.edges) == 0:
        return counts
    la = majority[graph.edges[:, 0]]
    lb = majority[graph.edges[:, 1]]
    keep = (la != VOID_INDEX) & (lb != VOID_INDEX)
    la, lb = la[keep], lb[keep]
    np.add.at(counts, (la, lb), 1)
    np.add.at(counts, (lb, la), 1)
    return counts


def conditional_from_counts(
    counts: np.ndarray, alpha: float, floor: float
) -> CooccurrenceModel:
    """P[:, j] = (c[:, j] + alpha) / (sum_i c[i, j] + alpha * n); columns with
    no mass at all become uniform. Entries are floored at `floor` and the
    remaining mass rescaled, so columns still sum to exactly 1."""
    n = counts.shape[0]
    col_mass = counts.sum(axis=0) + alpha * n
    matrix = np.empty((n, n), dtype=np.float64)
    for j in range(n):
        if col_mass[j] == 0:
            matrix[:, j] = 1.0 / n
            continue
        col = (counts[:, j] + alpha) / col_mass[j]
        low = col < floor
        if low.any():
            col[low] = floor
            scale = (1.0 - low.sum() * floor) / col[~low].sum()
            col[~low] *= scale
        matrix[:, j] = col
    return CooccurrenceModel(matrix=matrix, alpha=alpha, floor=floor)


def estimate_cooccurrence(
    retrieval: RetrievalSet,
    labeled_adjacency: Callable[[int], tuple[AdjacencyGraph, np.ndarray]],
    classes: ClassTable,
    alpha: float = 1.0,
    floor: float = 1e-6,
) -> CooccurrenceModel:
    """Accumulate adjacent-label counts over the retrieved train images.

    `labeled_adjacency(image_id)` returns the adjacency graph and per-segment
    majority labels of that image's main-parameter segmentation (typically
    from a cache).
    """
    if len(retrieval) == 0:
        raise ValueError("empty retrieval set")
    n = len(classes)
    counts = np.zeros((n, n), dtype=np.int64)
    for image_id in retrieval.ids:
        graph, majority = labeled_adjacency(int(image_id))
        counts += count_adjacent_labels(graph, majority, n)
    return conditional_from_counts(counts, alpha, floor)


def save_cooccurrence(
    model: CooccurrenceModel,
    classes: ClassTable,
    path,
    sidecar: dict | None = None,
) -> None:
    """CSV matrix (first row class names) plus a provenance JSON sidecar."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(classes.names)
        for row in model.matrix:
            writer.writerow([f"{v:.12g}" for v in row])
    meta = {"alpha": model.alpha, "epsilon": model.floor}
    if sidecar:
        meta.update(sidecar)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cooccurrence(path, alpha: float = 1.0, floor: float = 1e-6) -> CooccurrenceModel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # class names
        matrix = np.array([[float(v) for v in row] for row in reader])
    return CooccurrenceModel(matrix=matrix, alpha=alpha, floor=floor)
