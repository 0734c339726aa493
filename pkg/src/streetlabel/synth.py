"""Seeded synthetic street scenes for desk-scale runs and tests.

Every image is a sky band over a road band (the horizon moves image to
image) with rectangles for foreground classes, placed under per-class pixel
budgets so label proportions land in controlled tier ranges. Additive
Gaussian color noise makes the scoring problem non-trivial.

Profiles:
  street   five classes with positional priors and distinct colors
  twin     two classes sharing one color in disjoint vertical bands
  smallobj small weak-contrast objects on a large background
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import ClassTable, DatasetManifest, LabelMap, ManifestEntry, save_label_map, save_manifest, save_rgb

PROFILES = ("street", "twin", "smallobj")

_TABLES = {
    "street": ClassTable(
        names=("void", "sky", "road", "tree", "car", "pole"),
        palette=(
            (0, 0, 0),
            (70, 130, 180),
            (128, 64, 128),
            (60, 160, 60),
            (220, 20, 60),
            (250, 220, 60),
        ),
    ),
    "twin": ClassTable(
        names=("void", "sky", "road", "panel_upper", "panel_lower"),
        palette=(
            (0, 0, 0),
            (70, 130, 180),
            (128, 64, 128),
            (255, 140, 0),
            (148, 0, 211),
        ),
    ),
    "smallobj": ClassTable(
        names=("void", "sky", "road", "marker"),
        palette=((0, 0, 0), (70, 130, 180), (128, 64, 128), (255, 69, 0)),
    ),
}

_COLORS = {
    "street": {
        "sky": (140, 190, 235),
        "road": (110, 110, 115),
        "tree": (55, 140, 60),
        "car": (200, 45, 40),
        "pole": (235, 215, 70),
    },
    # one background color above and below: boundary segments of the two
    # panel classes then carry identical color contamination, so position is
    # truly the only separating signal
    "twin": {
        "sky": (128, 140, 160),
        "road": (128, 140, 160),
        "panel_upper": (210, 175, 55),
        "panel_lower": (210, 175, 55),
    },
    "smallobj": {
        "sky": (140, 190, 235),
        "road": (115, 115, 118),
        "marker": (134, 104, 98),
    },
}


def class_table(profile: str) -> ClassTable:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    return _TABLES[profile]


def _paint_rect(rgb, labels, rng, color, class_index, x, y, w, h):
    rgb[y : y + h, x : x + w] = color
    labels[y : y + h, x : x + w] = class_index


def _fill_budget(rgb, labels, rng, color, cls, size, budget_frac, dims, y_range):
    """Place rectangles until the class covers about budget_frac of the
    image, capping the last rectangle's height by the remaining budget."""
    target = int(budget_frac * size * size)
    w_lo, w_hi, h_lo, h_hi = dims
    while True:
        have = int((labels == cls).sum())
        remaining = target - have
        if remaining < w_lo * h_lo:
            break
        w = int(rng.integers(w_lo, w_hi + 1))
        h = int(rng.integers(h_lo, h_hi + 1))
        h = max(h_lo, min(h, remaining // w + 1))
        y_lo, y_hi = y_range
        y = int(rng.integers(y_lo, max(y_lo + 1, y_hi - h)))
        x = int(rng.integers(1, size - w))
        _paint_rect(rgb, labels, rng, color, cls, x, y, w, h)


def _make_street(rng, size, classes):
    rgb = np.zeros((size, size, 3), dtype=np.float64)
    labels = np.zeros((size, size), dtype=np.uint8)
    colors = _COLORS["street"]
    horizon = int(size * rng.uniform(0.42, 0.55))
    rgb[:horizon] = colors["sky"]
    labels[:horizon] = classes.index_of("sky")
    rgb[horizon:] = colors["road"]
    labels[horizon:] = classes.index_of("road")
    _fill_budget(
        rgb, labels, rng, colors["tree"], classes.index_of("tree"), size,
        rng.uniform(0.062, 0.092), (8, 13, 6, 11), (2, horizon - 2),
    )
    _fill_budget(
        rgb, labels, rng, colors["car"], classes.index_of("car"), size,
        rng.uniform(0.058, 0.088), (8, 13, 5, 9), (horizon + 1, size - 3),
    )
    _fill_budget(
        rgb, labels, rng, colors["pole"], classes.index_of("pole"), size,
        rng.uniform(0.012, 0.020), (3, 4, 8, 14), (horizon - 8, horizon + 8),
    )
    # distractor patches: background regions that borrow a foreground color
    # (shadows, reflections); ground truth keeps the background label, so a
    # local scorer mislabels them and only context can recover
    fg_names = ("tree", "car", "pole")
    for _ in range(int(rng.integers(2, 5))):
        w = int(rng.integers(4, 8))
        h = int(rng.integers(4, 8))
        if rng.random() < 0.5 and horizon > h + 4:
            y = int(rng.integers(1, horizon - h - 1))
        else:
            y = int(rng.integers(horizon + 1, size - h - 1))
        x = int(rng.integers(1, size - w - 1))
        bg = rgb[y, x].copy()
        fg = np.array(colors[fg_names[int(rng.integers(len(fg_names)))]], dtype=np.float64)
        mix = rng.uniform(0.55, 0.75)
        rgb[y : y + h, x : x + w] = mix * fg + (1 - mix) * bg
    if rng.random() < 0.3:  # occasional unannotated patch
        x, y = rng.integers(2, size - 7, size=2)
        _paint_rect(rgb, labels, rng, rng.integers(60, 200, size=3), 0, x, y, 5, 5)
    return rgb, labels


def _make_twin(rng, size, classes):
    rgb = np.zeros((size, size, 3), dtype=np.float64)
    labels = np.zeros((size, size), dtype=np.uint8)
    colors = _COLORS["twin"]
    horizon = size // 2
    rgb[:horizon] = colors["sky"]
    labels[:horizon] = classes.index_of("sky")
    rgb[horizon:] = colors["road"]
    labels[horizon:] = classes.index_of("road")
    # identical colors, disjoint vertical bands: the only separating signal
    # is where the panel sits in the image
    _fill_budget(
        rgb, labels, rng, colors["panel_upper"], classes.index_of("panel_upper"),
        size, rng.uniform(0.05, 0.08), (8, 12, 6, 10), (2, size // 3),
    )
    _fill_budget(
        rgb, labels, rng, colors["panel_lower"], classes.index_of("panel_lower"),
        size, rng.uniform(0.05, 0.08), (8, 12, 6, 10), (2 * size // 3, size - 3),
    )
    return rgb, labels


def _make_smallobj(rng, size, classes):
    rgb = np.zeros((size, size, 3), dtype=np.float64)
    labels = np.zeros((size, size), dtype=np.uint8)
    colors = _COLORS["smallobj"]
    horizon = int(size * rng.uniform(0.30, 0.40))
    rgb[:horizon] = colors["sky"]
    labels[:horizon] = classes.index_of("sky")
    rgb[horizon:] = colors["road"]
    labels[horizon:] = classes.index_of("road")
    n_markers = int(rng.integers(4, 8))
    cls = classes.index_of("marker")
    for _ in range(n_markers):
        w = int(rng.integers(4, 7))
        h = int(rng.integers(4, 7))
        x = int(rng.integers(1, size - w - 1))
        y = int(rng.integers(horizon + 2, size - h - 1))
        _paint_rect(rgb, labels, rng, colors["marker"], cls, x, y, w, h)
    return rgb, labels


_MAKERS = {"street": _make_street, "twin": _make_twin, "smallobj": _make_smallobj}


def generate_dataset(
    out_dir,
    n_train: int,
    n_test: int,
    size: int = 64,
    seed: int = 42,
    noise: float = 8.0,
    profile: str = "street",
) -> Path:
    """Write images, label maps, and a manifest; returns the manifest path."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    classes = _TABLES[profile]
    maker = _MAKERS[profile]
    entries = []
    for idx in range(n_train + n_test):
        rng = np.random.default_rng([seed, idx])
        rgb, labels = maker(rng, size, classes)
        rgb = np.clip(rgb + rng.normal(0.0, noise, rgb.shape), 0, 255).astype(np.uint8)
        image_path = out_dir / "images" / f"img{idx:04d}.png"
        label_path = out_dir / "labels" / f"img{idx:04d}.png"
        save_rgb(rgb, image_path)
        save_label_map(LabelMap(labels), label_path)
        entries.append(
            ManifestEntry(
                image=image_path,
                labels=label_path,
                split="train" if idx < n_train else "test",
            )
        )
    manifest = DatasetManifest(classes=classes, entries=tuple(entries), base_dir=out_dir)
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
