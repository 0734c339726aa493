"""SLIC superpixel over-segmentation and per-superpixel ground-truth labels.

Local k-means over (L, a, b, x, y): seeds on a near-uniform grid, each moved
to the lowest-gradient spot in its 3x3 neighborhood, then iterative
assignment inside a 2S x 2S window with distance d_lab + (m / S) * d_xy.
A connectivity pass merges stray components below S^2 / 4 pixels into their
largest adjacent segment, so every returned segment is 4-connected.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .core import VOID_INDEX, ClassTable, LabImage, LabelMap

SPXM_MAGIC = b"SPXM"


@dataclass(frozen=True)
class SlicParams:
    target_count: int
    compactness: float = 10.0
    iterations: int = 10

    def __post_init__(self):
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class SuperpixelMap:
    """Dense per-pixel segment ids plus per-segment geometry."""

    assignment: np.ndarray
    flipped: bool = False
    pixel_counts: np.ndarray = field(init=False)
    centroids: np.ndarray = field(init=False)  # (n, 2) as (x, y)
    bboxes: np.ndarray = field(init=False)  # (n, 4) as (x0, y0, x1, y1) inclusive

    def __post_init__(self):
        a = self.assignment
        if a.ndim != 2 or a.dtype != np.int32:
            raise ValueError("assignment must be an (h, w) int32 array")
        n = int(a.max()) + 1
        counts = np.bincount(a.ravel(), minlength=n)
        if a.min() < 0 or (counts == 0).any():
            raise ValueError("segment ids must be dense 0..n-1")
        ys, xs = np.indices(a.shape)
        sx = np.bincount(a.ravel(), weights=xs.ravel(), minlength=n)
        sy = np.bincount(a.ravel(), weights=ys.ravel(), minlength=n)
        self.pixel_counts = counts
        self.centroids = np.stack([sx / counts, sy / counts], axis=1)
        bboxes = np.empty((n, 4), dtype=np.int64)
        flat = a.ravel()
        bboxes[:, 0] = _per_label_min(flat, xs.ravel(), n)
        bboxes[:, 1] = _per_label_min(flat, ys.ravel(), n)
        bboxes[:, 2] = _per_label_max(flat, xs.ravel(), n)
        bboxes[:, 3] = _per_label_max(flat, ys.ravel(), n)
        self.bboxes = bboxes

    @property
    def n_segments(self) -> int:
        return len(self.pixel_counts)

    @property
    def height(self) -> int:
        return self.assignment.shape[0]

    @property
    def width(self) -> int:
        return self.assignment.shape[1]


def _per_label_min(labels, values, n):
    out = np.full(n, np.iinfo(np.int64).max)
    np.minimum.at(out, labels, values)
    return out


def _per_label_max(labels, values, n):
    out = np.full(n, np.iinfo(np.int64).min)
    np.maximum.at(out, labels, values)
    return out


def _seed_grid(height: int, width: int, k: int) -> np.ndarray:
    """Near-uniform grid of about k seeds, balanced to the image aspect."""
    nx = min(max(1, math.ceil(math.sqrt(k * width / height))), width)
    ny = min(max(1, math.ceil(k / nx)), height)
    xs = ((np.arange(nx) + 0.5) * width / nx).astype(np.int64)
    ys = ((np.arange(ny) + 0.5) * height / ny).astype(np.int64)
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    return grid  # (n, 2) as (x, y), row-major over the grid


@njit(cache=True)
def _perturb_seeds(lab, seeds):
    """Move each seed to the lowest-gradient pixel in its 3x3 neighborhood,
    with G = |I(x+1,y)-I(x-1,y)|^2 + |I(x,y+1)-I(x,y-1)|^2 over LAB.
    The center wins gradient ties (it is primed as the initial best)."""
    h, w = lab.shape[0], lab.shape[1]
    out = seeds.copy()
    if h < 3 or w < 3:
        return out
    for i in range(seeds.shape[0]):
        cx = min(max(seeds[i, 0], 1), w - 2)
        cy = min(max(seeds[i, 1], 1), h - 2)
        best = np.inf
        g_center = 0.0
        bx, by = cx, cy
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                x = min(max(cx + dx, 1), w - 2)
                y = min(max(cy + dy, 1), h - 2)
                g = 0.0
                for c in range(3):
                    gx = lab[y, x + 1, c] - lab[y, x - 1, c]
                    gy = lab[y + 1, x, c] - lab[y - 1, x, c]
                    g += gx * gx + gy * gy
                if dx == 0 and dy == 0:
                    g_center = g
                else:
                    if g < best:
                        best = g
                        bx, by = x, y
        if g_center <= best:
            bx, by = cx, cy
        out[i, 0] = bx
        out[i, 1] = by
    return out


@njit(cache=True)
def _kmeans_assign(lab, centers, s, ratio, iterations):
    h, w = lab.shape[0], lab.shape[1]
    k = centers.shape[0]
    assignment = np.empty((h, w), np.int32)
    dist = np.empty((h, w), np.float64)
    for _ in range(iterations):
        assignment[:] = -1
        dist[:] = np.inf
        for ki in range(k):
            cl = centers[ki, 0]
            ca = centers[ki, 1]
            cb = centers[ki, 2]
            cx = centers[ki, 3]
            cy = centers[ki, 4]
            x0 = max(int(cx - s), 0)
            x1 = min(int(cx + s) + 1, w)
            y0 = max(int(cy - s), 0)
            y1 = min(int(cy + s) + 1, h)
            for y in range(y0, y1):
                for x in range(x0, x1):
                    dl = lab[y, x, 0] - cl
                    da = lab[y, x, 1] - ca
                    db = lab[y, x, 2] - cb
                    dx = x - cx
                    dy = y - cy
                    d = math.sqrt(dl * dl + da * da + db * db) + ratio * math.sqrt(
                        dx * dx + dy * dy
                    )
                    if d < dist[y, x]:
                        dist[y, x] = d
                        assignment[y, x] = ki
        for y in range(h):
            for x in range(w):
                if assignment[y, x] < 0:
                    best = np.inf
                    bk = 0
                    for ki in range(k):
                        dx = x - centers[ki, 3]
                        dy = y - centers[ki, 4]
                        d = dx * dx + dy * dy
                        if d < best:
                            best = d
                            bk = ki
                    assignment[y, x] = bk
        sums = np.zeros((k, 5), np.float64)
        counts = np.zeros(k, np.int64)
        for y in range(h):
            for x in range(w):
                ki = assignment[y, x]
                sums[ki, 0] += lab[y, x, 0]
                sums[ki, 1] += lab[y, x, 1]
                sums[ki, 2] += lab[y, x, 2]
                sums[ki, 3] += x
                sums[ki, 4] += y
                counts[ki] += 1
        for ki in range(k):
            if counts[ki] > 0:
                for c in range(5):
                    centers[ki, c] = sums[ki, c] / counts[ki]
    return assignment


@njit(cache=True)
def _connected_components(assignment):
    """4-connected components, ids assigned in raster order of first pixel."""
    h, w = assignment.shape
    comp = np.full((h, w), -1, np.int32)
    stack = np.empty(h * w, np.int64)
    n = 0
    for y0 in range(h):
        for x0 in range(w):
            if comp[y0, x0] >= 0:
                continue
            label = assignment[y0, x0]
            comp[y0, x0] = n
            stack[0] = y0 * w + x0
            top = 1
            while top > 0:
                top -= 1
                p = stack[top]
                y = p // w
                x = p % w
                if x > 0 and comp[y, x - 1] < 0 and assignment[y, x - 1] == label:
                    comp[y, x - 1] = n
                    stack[top] = p - 1
                    top += 1
                if x < w - 1 and comp[y, x + 1] < 0 and assignment[y, x + 1] == label:
                    comp[y, x + 1] = n
                    stack[top] = p + 1
                    top += 1
                if y > 0 and comp[y - 1, x] < 0 and assignment[y - 1, x] == label:
                    comp[y - 1, x] = n
                    stack[top] = p - w
                    top += 1
                if y < h - 1 and comp[y + 1, x] < 0 and assignment[y + 1, x] == label:
                    comp[y + 1, x] = n
                    stack[top] = p + w
                    top += 1
            n += 1
    return comp, n


@njit(cache=True)
def _find_root(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def _merge_small(comp, n_comp, min_size):
    """Union components below min_size into their largest adjacent region
    (ties to the lowest region id), then relabel densely in raster order."""
    h, w = comp.shape
    size = np.zeros(n_comp, np.int64)
    for y in range(h):
        for x in range(w):
            size[comp[y, x]] += 1

    max_pairs = 2 * (h * (w - 1) + (h - 1) * w)
    src = np.empty(max_pairs, np.int32)
    dst = np.empty(max_pairs, np.int32)
    m = 0
    for y in range(h):
        for x in range(w):
            c = comp[y, x]
            if x + 1 < w and comp[y, x + 1] != c:
                src[m] = c
                dst[m] = comp[y, x + 1]
                m += 1
                src[m] = comp[y, x + 1]
                dst[m] = c
                m += 1
            if y + 1 < h and comp[y + 1, x] != c:
                src[m] = c
                dst[m] = comp[y + 1, x]
                m += 1
                src[m] = comp[y + 1, x]
                dst[m] = c
                m += 1

    # CSR adjacency via counting sort (duplicate entries are harmless)
    start = np.zeros(n_comp + 1, np.int64)
    for i in range(m):
        start[src[i] + 1] += 1
    for i in range(n_comp):
        start[i + 1] += start[i]
    adj = np.empty(m, np.int32)
    cursor = start[:n_comp].copy()
    for i in range(m):
        adj[cursor[src[i]]] = dst[i]
        cursor[src[i]] += 1

    parent = np.arange(n_comp)
    changed = True
    while changed:
        changed = False
        for c in range(n_comp):
            root = _find_root(parent, c)
            if size[root] >= min_size:
                continue
            best = -1
            best_size = np.int64(-1)
            for ai in range(start[c], start[c + 1]):
                nb_root = _find_root(parent, adj[ai])
                if nb_root == root:
                    continue
                if size[nb_root] > best_size or (
                    size[nb_root] == best_size and nb_root < best
                ):
                    best = nb_root
                    best_size = size[nb_root]
            if best >= 0:
                size[best] += size[root]
                parent[root] = best
                changed = True

    remap = np.full(n_comp, -1, np.int32)
    next_id = 0
    for c in range(n_comp):  # comp ids are in raster first-pixel order
        r = _find_root(parent, c)
        if remap[r] < 0:
            remap[r] = next_id
            next_id += 1
    out = np.empty((h, w), np.int32)
    for y in range(h):
        for x in range(w):
            out[y, x] = remap[_find_root(parent, comp[y, x])]
    return out


def _enforce_connectivity(assignment: np.ndarray, min_size: float) -> np.ndarray:
    comp, n = _connected_components(assignment)
    return _merge_small(comp, n, min_size)


def segment(image: LabImage, params: SlicParams, flip: bool = False) -> SuperpixelMap:
    """Over-segment a LAB image; `flip` mirrors it horizontally first."""
    lab = image.data[:, ::-1, :] if flip else image.data
    lab = np.ascontiguousarray(lab)
    h, w = lab.shape[0], lab.shape[1]
    n_pixels = h * w
    if params.target_count > n_pixels:
        raise ValueError(
            f"target_count {params.target_count} exceeds pixel count {n_pixels}"
        )
    s = math.sqrt(n_pixels / params.target_count)
    seeds = _seed_grid(h, w, params.target_count)
    seeds = _perturb_seeds(lab, seeds)
    centers = np.empty((len(seeds), 5), dtype=np.float64)
    centers[:, 0:3] = lab[seeds[:, 1], seeds[:, 0]]
    centers[:, 3] = seeds[:, 0]
    centers[:, 4] = seeds[:, 1]
    assignment = _kmeans_assign(
        lab, centers, s, params.compactness / s, params.iterations
    )
    assignment = _enforce_connectivity(assignment, s * s / 4.0)
    return SuperpixelMap(assignment=assignment, flipped=flip)


def superpixel_majority_label(
    spx: SuperpixelMap, gt: LabelMap, classes: ClassTable
) -> np.ndarray:
    """Most frequent non-void class per segment; void only if all pixels are
    void. Ties go to the lowest class index."""
    if gt.labels.shape != spx.assignment.shape:
        raise ValueError("label map dimensions do not match the superpixel map")
    n_classes = len(classes)
    n = spx.n_segments
    flat = spx.assignment.ravel().astype(np.int64) * n_classes + gt.labels.ravel()
    counts = np.bincount(flat, minlength=n * n_classes).reshape(n, n_classes)
    nonvoid = counts.copy()
    nonvoid[:, VOID_INDEX] = 0
    majority = np.argmax(nonvoid, axis=1).astype(np.int32)
    majority[nonvoid.sum(axis=1) == 0] = VOID_INDEX
    return majority


def save_superpixel_map(spx: SuperpixelMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SPXM_MAGIC)
        fh.write(struct.pack("<III", spx.width, spx.height, spx.n_segments))
        fh.write(spx.assignment.astype("<u4").tobytes())


def load_superpixel_map(path, flipped: bool = False) -> SuperpixelMap:
    data = Path(path).read_bytes()
    if data[:4] != SPXM_MAGIC:
        raise ValueError(f"bad magic in superpixel map file {path}")
    width, height, n_segments = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * width * height
    if len(data) != expected:
        raise ValueError(f"truncated superpixel map file {path}")
    assignment = (
        np.frombuffer(data, dtype="<u4", offset=16)
        .reshape(height, width)
        .astype(np.int32)
    )
    spx = SuperpixelMap(assignment=assignment, flipped=flipped)
    if spx.n_segments != n_segments:
        raise ValueError(f"segment count mismatch in {path}")
    return spx
