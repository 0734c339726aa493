"""Shared fixtures and instance generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from streetlabel.context import AdjacencyGraph, CooccurrenceModel, conditional_from_counts
from streetlabel.core import ClassTable
from streetlabel.mrf import MRFProblem


def small_class_table(n_classes: int = 3) -> ClassTable:
    names = ("void",) + tuple(f"cls{i}" for i in range(1, n_classes))
    palette = ((0, 0, 0),) + tuple((10 * i, 20 * i % 256, 255 - 7 * i) for i in range(1, n_classes))
    return ClassTable(names=names, palette=palette)


def street_table() -> ClassTable:
    return ClassTable(
        names=("void", "sky", "road", "tree", "car", "pole"),
        palette=(
            (0, 0, 0),
            (70, 130, 180),
            (128, 64, 128),
            (60, 160, 60),
            (220, 20, 60),
            (250, 220, 60),
        ),
    )


def random_edges(rng: np.random.Generator, n_nodes: int, density: float = 0.4) -> np.ndarray:
    pairs = [(a, b) for a in range(n_nodes - 1) for b in range(a + 1, n_nodes)]
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    keep = rng.random(len(pairs)) < density
    chosen = [p for p, k in zip(pairs, keep) if k]
    if not chosen:
        chosen = [pairs[int(rng.integers(len(pairs)))]]
    return np.array(chosen, dtype=np.int64)


def random_problem(
    rng: np.random.Generator,
    n_nodes: int,
    n_classes: int,
    lam: float | None = None,
    hard: bool = False,
) -> MRFProblem:
    scores = rng.dirichlet(np.ones(n_classes) * rng.uniform(0.4, 3.0), size=n_nodes)
    counts = rng.integers(0, 30, size=(n_classes, n_classes))
    counts = counts + counts.T  # symmetric, like real edge counts
    cooc = conditional_from_counts(counts, alpha=1.0, floor=1e-6)
    graph = AdjacencyGraph(n_nodes, random_edges(rng, n_nodes))
    if lam is None:
        lam = float(rng.uniform(0.0, 1.5))
    return MRFProblem(scores=scores, graph=graph, cooccurrence=cooc, lam=lam, hard=hard)


def reference_energy(problem: MRFProblem, labels) -> float:
    """Independent evaluator of the labeling energy, written directly from
    the definitions: data cost as squared distance to the one-hot vector,
    plus lambda times the Potts-gated, weighted -log mean conditional."""
    labels = np.asarray(labels)
    n, c = problem.scores.shape
    total = 0.0
    for i in range(n):
        one_hot = np.zeros(c)
        one_hot[labels[i]] = 1.0
        diff = problem.scores[i] - one_hot
        total += float(np.dot(diff, diff))
    p = problem.cooccurrence.matrix
    for a, b in problem.graph.edges:
        la, lb = int(labels[a]), int(labels[b])
        if la == lb:
            continue
        if problem.hard:
            w = 1.0
        else:
            d = problem.scores[a] - problem.scores[b]
            w = float(np.dot(d, d))
        mean_p = (p[la, lb] + p[lb, la]) / 2.0
        total += problem.lam * w * (-np.log(mean_p))
    return total


@pytest.fixture(scope="session")
def street_mini(tmp_path_factory):
    """A small deterministic street dataset shared by CLI-level tests."""
    from streetlabel.synth import generate_dataset

    root = tmp_path_factory.mktemp("street_mini")
    manifest = generate_dataset(root, n_train=6, n_test=2, size=48, seed=7, noise=10)
    return manifest
