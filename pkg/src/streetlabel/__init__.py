"""Superpixel street-scene labeling pipeline.

Stages: SLIC over-segmentation, class-tiered training-set expansion, a
pluggable per-superpixel scorer with location priors, nearest-scene
retrieval, co-occurrence context estimation, and graph-cut refinement of
the labeling energy.
"""

from .core import (
    ClassTable,
    DatasetManifest,
    LabImage,
    LabelMap,
    ManifestEntry,
    load_manifest,
    rgb_to_lab,
)
from .slic import SlicParams, SuperpixelMap, segment, superpixel_majority_label
from .augment import AugmentationPlan, TierThresholds, TrainingUnit, build_training_units
from .scorer import BaselineScorer, argmax_labeling, build_masked_image, extract_features
from .retrieval import NearestImageRetriever, RetrievalSet, builtin_global_feature, knn_retrieve
from .context import AdjacencyGraph, CooccurrenceModel, build_adjacency, estimate_cooccurrence
from .mrf import MRFProblem, SolveResult, brute_force_solve, solve, total_energy
from .metrics import ConfusionMatrix, mean_class_accuracy, per_pixel_accuracy
from .pipeline import PipelineConfig, PipelineRun, open_run

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "AugmentationPlan",
    "BaselineScorer",
    "ClassTable",
    "ConfusionMatrix",
    "CooccurrenceModel",
    "DatasetManifest",
    "LabImage",
    "LabelMap",
    "ManifestEntry",
    "MRFProblem",
    "NearestImageRetriever",
    "PipelineConfig",
    "PipelineRun",
    "RetrievalSet",
    "SlicParams",
    "SolveResult",
    "SuperpixelMap",
    "TierThresholds",
    "TrainingUnit",
    "argmax_labeling",
    "brute_force_solve",
    "build_adjacency",
    "build_masked_image",
    "build_training_units",
    "builtin_global_feature",
    "estimate_cooccurrence",
    "extract_features",
    "knn_retrieve",
    "load_manifest",
    "mean_class_accuracy",
    "open_run",
    "per_pixel_accuracy",
    "rgb_to_lab",
    "segment",
    "solve",
    "superpixel_majority_label",
    "total_energy",
]
