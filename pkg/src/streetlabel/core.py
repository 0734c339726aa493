"""Foundational data types and IO: class tables, images, label maps, manifests.

Label maps are stored as 8-bit single-channel PNGs whose pixel values are
class indices. Class index 0 is always the void class (unannotated pixels);
downstream code relies on `labels != 0` being the annotated mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class ManifestError(ValueError):
    """Raised for malformed or inconsistent dataset manifests."""


VOID_INDEX = 0

# sRGB <-> XYZ under D65 (IEC 61966-2-1), white point (Xn, Yn, Zn).
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True)
class ClassTable:
    """Ordered class names with a rendering palette. Index 0 is void."""

    names: tuple[str, ...]
    palette: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if not self.names:
            raise ValueError("class table needs at least one class")
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        if len(self.palette) != len(self.names):
            raise ValueError("palette length must equal class count")
        if tuple(self.palette[VOID_INDEX]) != (0, 0, 0):
            raise ValueError("void class must render black")
        if len(set(map(tuple, self.palette))) != len(self.palette):
            raise ValueError("palette colors must be distinct")
        for color in self.palette:
            if len(color) != 3 or any(not (0 <= c <= 255) for c in color):
                raise ValueError(f"bad palette entry {color!r}")

    @property
    def void_index(self) -> int:
        return VOID_INDEX

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class LabImage:
    """CIE-LAB image, float64 array of shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("LabImage expects an (h, w, 3) array")
        if self.data.shape[0] == 0 or self.data.shape[1] == 0:
            raise ValueError("zero-size image")
        if not np.isfinite(self.data).all():
            raise ValueError("non-finite LAB values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices, uint8 array of shape (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ValueError("LabelMap expects an (h, w) array")
        if self.labels.dtype != np.uint8:
            raise ValueError("LabelMap stores uint8 class indices")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    image: Path
    labels: Path
    split: str
    features: Path | None = None
    scores: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    classes: ClassTable
    entries: tuple[ManifestEntry, ...]
    base_dir: Path = field(default_factory=Path)

    def split_ids(self, split: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.split == split]


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Relative paths are resolved against the manifest's directory. Every
    referenced image/label file must exist; errors name the entry index.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("classes", "palette", "entries"):
        if key not in raw:
            raise ManifestError(f"manifest missing top-level '{key}'")
    classes = ClassTable(
        names=tuple(raw["classes"]),
        palette=tuple(tuple(int(c) for c in color) for color in raw["palette"]),
    )
    if not raw["entries"]:
        raise ManifestError("manifest has no entries")

    base = path.parent
    entries = []
    seen_paths: set[Path] = set()
    for i, rec in enumerate(raw["entries"]):
        if not isinstance(rec, dict):
            raise ManifestError(f"malformed record at entry {i}")
        for key in ("image", "labels", "split"):
            if key not in rec:
                raise ManifestError(f"entry {i} missing '{key}'")
        if rec["split"] not in ("train", "test"):
            raise ManifestError(f"bad split {rec['split']!r} at entry {i}")

        def resolve(key, required, i=i):
            if key not in rec or rec[key] is None:
                return None
            p = base / rec[key]
            if not p.is_file():
                raise ManifestError(f"dangling path {rec[key]!r} at entry {i}")
            return p

        image = resolve("image", True)
        labels = resolve("labels", True)
        for p in (image, labels):
            if p in seen_paths:
                raise ManifestError(f"duplicate path at entry {i}")
            seen_paths.add(p)
        entries.append(
            ManifestEntry(
                image=image,
                labels=labels,
                split=rec["split"],
                features=resolve("features", False),
                scores=resolve("scores", False),
            )
        )
    return DatasetManifest(classes=classes, entries=tuple(entries), base_dir=base)


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write a manifest as canonical JSON (paths relative to the file)."""
    path = Path(path)
    base = path.parent

    def rel(p):
        try:
            return str(Path(p).relative_to(base))
        except ValueError:
            return str(p)

    doc = {
        "classes": list(manifest.classes.names),
        "palette": [list(c) for c in manifest.classes.palette],
        "entries": [],
    }
    for e in manifest.entries:
        rec = {"image": rel(e.image), "labels": rel(e.labels), "split": e.split}
        if e.features is not None:
            rec["features"] = rel(e.features)
        if e.scores is not None:
            rec["scores"] = rel(e.scores)
        doc["entries"].append(rec)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_rgb(path) -> np.ndarray:
    """Load an image file as an (h, w, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_rgb(rgb: np.ndarray, path) -> None:
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def rgb_to_lab(rgb: np.ndarray) -> LabImage:
    """Convert an 8-bit sRGB raster to CIE-LAB under the D65 white point."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB array")
    if rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise ValueError("zero-size image")
    srgb = rgb.astype(np.float64) / 255.0
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(lab)


def load_label_map(path, classes: ClassTable) -> LabelMap:
    """Load an 8-bit single-channel PNG of class indices, validating range."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"label map {path} must be single-channel 8-bit")
        arr = np.asarray(im, dtype=np.uint8)
    bad = arr >= len(classes)
    if bad.any():
        ys, xs = np.nonzero(bad)
        raise ValueError(f"class index {arr[ys[0], xs[0]]} at ({xs[0]}, {ys[0]})")
    return LabelMap(arr)


def save_label_map(label_map: LabelMap, path) -> None:
    Image.fromarray(label_map.labels, mode="L").save(path, format="PNG")


def render_label_map(label_map: LabelMap, classes: ClassTable) -> np.ndarray:
    """Map class indices to palette colors; void renders black."""
    if label_map.labels.max(initial=0) >= len(classes):
        raise ValueError("label map contains out-of-range class indices")
    palette = np.asarray(classes.palette, dtype=np.uint8)
    return palette[label_map.labels]


def resize_rgb(rgb: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an RGB raster to size x size pixels."""
    im = Image.fromarray(rgb, mode="RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(im, dtype=np.uint8)


def resize_labels(label_map: LabelMap, size: int) -> LabelMap:
    """Nearest-neighbor resize; label values are never interpolated."""
    im = Image.fromarray(label_map.labels, mode="L").resize((size, size), Image.NEAREST)
    return LabelMap(np.asarray(im, dtype=np.uint8))
