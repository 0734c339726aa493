"""Hierarchical class-tiered training-set expansion.

Each class in a training image falls into one of four tiers by its label
proportion: majority (named background classes), common (> 10%), unusual
(3% to 10%], scarce (<= 3%). Rarer tiers are expanded harder: the flipped
main segmentation plus re-segmentations at extra superpixel counts, so the
resulting training-unit multiset is far closer to class-balanced than the
raw pixel distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .core import VOID_INDEX, ClassTable, LabelMap

MAJORITY = "majority"
COMMON = "common"
UNUSUAL = "unusual"
SCARCE = "scarce"
TIERS = (MAJORITY, COMMON, UNUSUAL, SCARCE)

UNITS_CSV_HEADER = ["image_id", "K", "flipped", "segment_id", "class", "tier"]


@dataclass(frozen=True)
class TierThresholds:
    common_min: float = 0.10
    unusual_min: float = 0.03
    majority_classes: tuple[str, ...] = ("sky", "building", "road")

    def __post_init__(self):
        if not (0 < self.unusual_min < self.common_min < 1):
            raise ValueError("need 0 < unusual_min < common_min < 1")


@dataclass(frozen=True)
class AugmentationPlan:
    """Main superpixel count plus per-tier extra counts and flip switches."""

    main_param: int = 150
    tier_params: dict[str, tuple[int, ...]] = field(
        default_factory=lambda: {
            MAJORITY: (),
            COMMON: (),
            UNUSUAL: (100, 125, 200),
            SCARCE: (100, 125, 200, 175, 130, 170),
        }
    )
    flip_enabled: dict[str, bool] = field(
        default_factory=lambda: {
            MAJORITY: False,
            COMMON: True,
            UNUSUAL: True,
            SCARCE: True,
        }
    )

    def __post_init__(self):
        if set(self.tier_params) != set(TIERS) or set(self.flip_enabled) != set(TIERS):
            raise ValueError("plan must cover exactly the four tiers")
        if not set(self.tier_params[UNUSUAL]) <= set(self.tier_params[SCARCE]):
            raise ValueError("scarce extra params must be a superset of unusual")
        if self.tier_params[MAJORITY] or self.flip_enabled[MAJORITY]:
            raise ValueError("majority tier is never expanded")


@dataclass(frozen=True)
class TrainingUnit:
    image_id: int
    k: int
    flipped: bool
    segment_id: int
    class_index: int
    tier: str

    def __post_init__(self):
        if self.class_index == VOID_INDEX:
            raise ValueError("training units never carry the void class")


def label_proportions(gt: LabelMap, classes: ClassTable) -> np.ndarray:
    """Fraction of all image pixels per class; the void entry is 0."""
    counts = np.bincount(gt.labels.ravel(), minlength=len(classes))
    props = counts / gt.labels.size
    props[VOID_INDEX] = 0.0
    return props


def tier_of(
    class_index: int,
    proportion: float,
    thresholds: TierThresholds,
    classes: ClassTable,
) -> str:
    """Tier for one class in one image. Boundary proportions fall downward:
    exactly common_min is unusual, exactly unusual_min is scarce."""
    if not (0.0 <= proportion <= 1.0):
        raise ValueError("proportion must lie in [0, 1]")
    if classes.names[class_index] in thresholds.majority_classes:
        return MAJORITY
    if proportion > thresholds.common_min:
        return COMMON
    if proportion > thresholds.unusual_min:
        return UNUSUAL
    return SCARCE


def image_tiers(
    gt: LabelMap, classes: ClassTable, thresholds: TierThresholds
) -> dict[int, str]:
    """Tier per non-void class index for one training image."""
    props = label_proportions(gt, classes)
    return {
        i: tier_of(i, props[i], thresholds, classes)
        for i in range(len(classes))
        if i != VOID_INDEX
    }


def enumerate_units(
    image_id: int,
    majorities: dict[tuple[int, bool], np.ndarray],
    tiers: dict[int, str],
    plan: AugmentationPlan,
) -> list[TrainingUnit]:
    """Apply the expansion rules to precomputed per-segmentation majority
    labels. `majorities` maps (K, flipped) to the per-segment class array.

    Selection per segmentation: at the main K unflipped, every non-void
    segment; at the main K flipped, segments of flip-enabled tiers; at an
    extra K (either orientation), segments whose class tier lists that K.
    Order: K ascending, unflipped before flipped, then segment id.
    """
    units: list[TrainingUnit] = []
    for k, flipped in sorted(majorities, key=lambda kf: (kf[0], kf[1])):
        labels = majorities[(k, flipped)]
        for seg_id, cls in enumerate(labels):
            cls = int(cls)
            if cls == VOID_INDEX:
                continue
            tier = tiers[cls]
            if k == plan.main_param:
                take = True if not flipped else plan.flip_enabled[tier]
            else:
                take = k in plan.tier_params[tier]
            if take:
                units.append(
                    TrainingUnit(image_id, k, flipped, seg_id, cls, tier)
                )
    return units


def required_segmentations(
    tiers: dict[int, str], plan: AugmentationPlan
) -> list[tuple[int, bool]]:
    """Which (K, flipped) segmentations the plan needs for one image."""
    present = set(tiers.values())
    needed = {(plan.main_param, False)}
    if any(plan.flip_enabled[t] for t in present):
        needed.add((plan.main_param, True))
    for tier in present:
        for k in plan.tier_params[tier]:
            needed.add((k, False))
            needed.add((k, True))
    return sorted(needed)


def build_training_units(
    train_ids: Iterable[int],
    gt_of: Callable[[int], LabelMap],
    majority_of: Callable[[int, int, bool], np.ndarray],
    classes: ClassTable,
    plan: AugmentationPlan,
    thresholds: TierThresholds,
) -> list[TrainingUnit]:
    """Expand the whole training split into an ordered unit list.

    `majority_of(image_id, K, flipped)` supplies per-segment majority classes
    for the (possibly cached) segmentation of that image.
    """
    train_ids = list(train_ids)
    if not train_ids:
        raise ValueError("empty train split")
    units: list[TrainingUnit] = []
    for image_id in train_ids:
        tiers = image_tiers(gt_of(image_id), classes, thresholds)
        majorities = {
            (k, f): majority_of(image_id, k, f)
            for k, f in required_segmentations(tiers, plan)
        }
        units.extend(enumerate_units(image_id, majorities, tiers, plan))
    return units


def class_histogram(
    units: Iterable[TrainingUnit], n_classes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Unit counts and proportions by class index."""
    counts = np.zeros(n_classes, dtype=np.int64)
    for u in units:
        counts[u.class_index] += 1
    total = counts.sum()
    proportions = counts / total if total else counts.astype(np.float64)
    return counts, proportions


def save_units_csv(units: Iterable[TrainingUnit], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(UNITS_CSV_HEADER)
        for u in units:
            writer.writerow(
                [u.image_id, u.k, int(u.flipped), u.segment_id, u.class_index, u.tier]
            )


def load_units_csv(path) -> list[TrainingUnit]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != UNITS_CSV_HEADER:
            raise ValueError(f"unexpected units CSV header: {header}")
        return [
            TrainingUnit(int(r[0]), int(r[1]), bool(int(r[2])), int(r[3]), int(r[4]), r[5])
            for r in reader
        ]


def save_histogram_csv(counts: np.ndarray, proportions: np.ndarray, classes: ClassTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "count", "proportion"])
        for i, name in enumerate(classes.names):
            writer.writerow([name, int(counts[i]), f"{proportions[i]:.6f}"])


def save_histogram_chart(counts: np.ndarray, classes: ClassTable, path) -> None:
    """Optional bar chart of the unit distribution (requires matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = classes.names[1:]
    fig, ax = plt.subplots(figsize=(max(4, len(names)), 3))
    ax.bar(names, counts[1:], color="steelblue")
    ax.set_ylabel("training units")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
