"""End-to-end orchestration: staged runs over a dataset manifest.

Stages communicate only through files in the output directory (superpixel
maps, units CSV, model, score files, retrieval lists, label maps, reports),
so running `pipeline` equals running the subcommands in sequence, and any
stage can be re-run in isolation. Everything is deterministic given the
manifest, the config, and its seeds.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import augment as aug
from . import context as ctx
from . import metrics as met
from . import mrf as mrfmod
from . import retrieval as ret
from . import scorer as sco
from . import slic as slicmod
from .core import (
    DatasetManifest,
    LabelMap,
    LabImage,
    load_label_map,
    load_manifest,
    load_rgb,
    render_label_map,
    resize_labels,
    resize_rgb,
    rgb_to_lab,
    save_label_map,
    save_rgb,
)

_SHIFT_STREAM = 7001


@dataclass(frozen=True)
class PipelineConfig:
    main_k: int = 150
    compactness: float = 10.0
    slic_iterations: int = 10
    common_min: float = 0.10
    unusual_min: float = 0.03
    majority_classes: tuple[str, ...] = ("sky", "building", "road")
    common_params: tuple[int, ...] = ()
    unusual_params: tuple[int, ...] = (100, 125, 200)
    scarce_params: tuple[int, ...] = (100, 125, 200, 175, 130, 170)
    scorer: str = "baseline"  # "baseline" or "score-files"
    learning_rate: float = 0.1
    epochs: int = 500
    retrieval_k: int = 50
    lam: float = 0.5
    alpha: float = 1.0
    floor: float = 1e-6
    seed: int = 42
    shift_ablation: bool = False
    hard_mrf: bool = False
    mrf_method: str = "swap"
    resize: int = 0  # 0 keeps the native size
    workers: int = 0  # 0 -> all available cores

    def slic_params(self, k: int | None = None) -> slicmod.SlicParams:
        return slicmod.SlicParams(
            target_count=k if k is not None else self.main_k,
            compactness=self.compactness,
            iterations=self.slic_iterations,
        )

    def thresholds(self) -> aug.TierThresholds:
        return aug.TierThresholds(
            common_min=self.common_min,
            unusual_min=self.unusual_min,
            majority_classes=tuple(self.majority_classes),
        )

    def plan(self) -> aug.AugmentationPlan:
        return aug.AugmentationPlan(
            main_param=self.main_k,
            tier_params={
                aug.MAJORITY: (),
                aug.COMMON: tuple(self.common_params),
                aug.UNUSUAL: tuple(self.unusual_params),
                aug.SCARCE: tuple(self.scarce_params),
            },
        )

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    known = asdict(cfg)
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    coerced = {}
    for key, value in data.items():
        if isinstance(known[key], tuple):
            value = tuple(value)
        coerced[key] = value
    return replace(cfg, **coerced)


def load_config(path) -> PipelineConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib

    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def config_to_toml(cfg: PipelineConfig) -> str:
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        elif isinstance(value, (int, float)):
            lines.append(f"{key} = {value!r}")
        elif isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, tuple):
            if value and isinstance(value[0], str):
                items = ", ".join(f'"{v}"' for v in value)
            else:
                items = ", ".join(str(v) for v in value)
            lines.append(f"{key} = [{items}]")
        else:
            raise TypeError(f"cannot serialize config key {key}")
    return "\n".join(lines) + "\n"


def _segment_worker(task):
    image_path, resize, k, compactness, iterations, flip = task
    rgb = load_rgb(image_path)
    if resize:
        rgb = resize_rgb(rgb, resize)
    spx = slicmod.segment(
        rgb_to_lab(rgb),
        slicmod.SlicParams(k, compactness, iterations),
        flip=flip,
    )
    return spx.assignment


class PipelineRun:
    """Caches per-image artifacts and exposes the pipeline stages."""

    def __init__(self, manifest: DatasetManifest, config: PipelineConfig, out_dir):
        self.manifest = manifest
        self.config = config
        self.classes = manifest.classes
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.spxm_dir = self.out / "spxm"
        self.scores_dir = self.out / "scores"
        self.retrieval_dir = self.out / "retrieval"
        self.cooc_dir = self.out / "cooc"
        self._rgb_cache: dict[int, np.ndarray] = {}
        self._lab_cache: dict[int, LabImage] = {}
        self._gt_cache: dict[int, LabelMap] = {}
        self._spx_cache: dict[tuple[int, int, bool], slicmod.SuperpixelMap] = {}
        self._majority_cache: dict[tuple[int, int, bool], np.ndarray] = {}
        self._adjacency_cache: dict[int, tuple[ctx.AdjacencyGraph, np.ndarray]] = {}
        (self.out / "config.toml").write_text(config_to_toml(config))

    # ---- per-image accessors -------------------------------------------

    def rgb(self, image_id: int) -> np.ndarray:
        if image_id not in self._rgb_cache:
            rgb = load_rgb(self.manifest.entries[image_id].image)
            if self.config.resize:
                rgb = resize_rgb(rgb, self.config.resize)
            self._rgb_cache[image_id] = rgb
        return self._rgb_cache[image_id]

    def lab(self, image_id: int) -> LabImage:
        if image_id not in self._lab_cache:
            self._lab_cache[image_id] = rgb_to_lab(self.rgb(image_id))
        return self._lab_cache[image_id]

    def gt(self, image_id: int) -> LabelMap:
        if image_id not in self._gt_cache:
            gt = load_label_map(self.manifest.entries[image_id].labels, self.classes)
            if self.config.resize:
                gt = resize_labels(gt, self.config.resize)
            self._gt_cache[image_id] = gt
        return self._gt_cache[image_id]

    def _spxm_path(self, image_id: int, k: int, flip: bool) -> Path:
        suffix = "f" if flip else ""
        return self.spxm_dir / f"img{image_id:04d}_k{k}{suffix}.spxm"

    def spx(self, image_id: int, k: int, flip: bool = False) -> slicmod.SuperpixelMap:
        key = (image_id, k, flip)
        if key not in self._spx_cache:
            path = self._spxm_path(image_id, k, flip)
            if path.is_file():
                spx = slicmod.load_superpixel_map(path, flipped=flip)
            else:
                spx = slicmod.segment(self.lab(image_id), self.config.slic_params(k), flip)
                self.spxm_dir.mkdir(exist_ok=True)
                slicmod.save_superpixel_map(spx, path)
            self._spx_cache[key] = spx
        return self._spx_cache[key]

    def majority(self, image_id: int, k: int, flip: bool = False) -> np.ndarray:
        key = (image_id, k, flip)
        if key not in self._majority_cache:
            gt = self.gt(image_id)
            if flip:
                gt = LabelMap(np.ascontiguousarray(gt.labels[:, ::-1]))
            self._majority_cache[key] = slicmod.superpixel_majority_label(
                self.spx(image_id, k, flip), gt, self.classes
            )
        return self._majority_cache[key]

    def labeled_adjacency(self, image_id: int) -> tuple[ctx.AdjacencyGraph, np.ndarray]:
        if image_id not in self._adjacency_cache:
            spx = self.spx(image_id, self.config.main_k, False)
            self._adjacency_cache[image_id] = (
                ctx.build_adjacency(spx),
                self.majority(image_id, self.config.main_k, False),
            )
        return self._adjacency_cache[image_id]

    def _shift_rng(self, image_id: int, k: int, flip: bool) -> np.random.Generator | None:
        if not self.config.shift_ablation:
            return None
        return np.random.default_rng(
            [self.config.seed, _SHIFT_STREAM, image_id, k, int(flip)]
        )

    def features(self, image_id: int, k: int, flip: bool = False) -> np.ndarray:
        lab = self.lab(image_id)
        if flip:
            lab = LabImage(np.ascontiguousarray(lab.data[:, ::-1, :]))
        return sco.extract_features(
            lab, self.spx(image_id, k, flip), shift_rng=self._shift_rng(image_id, k, flip)
        )

    def _precompute_segmentations(self, tasks: list[tuple[int, int, bool]]) -> None:
        """Fill the superpixel disk cache, in parallel if configured."""
        todo = [
            (image_id, k, flip)
            for image_id, k, flip in tasks
            if not self._spxm_path(image_id, k, flip).is_file()
        ]
        workers = self.config.effective_workers()
        if len(todo) < 2 or workers < 2:
            for image_id, k, flip in todo:
                self.spx(image_id, k, flip)
            return
        self.spxm_dir.mkdir(exist_ok=True)
        cfg = self.config
        args = [
            (
                str(self.manifest.entries[i].image),
                cfg.resize,
                k,
                cfg.compactness,
                cfg.slic_iterations,
                flip,
            )
            for i, k, flip in todo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (image_id, k, flip), assignment in zip(
                todo, pool.map(_segment_worker, args, chunksize=4)
            ):
                spx = slicmod.SuperpixelMap(assignment=assignment, flipped=flip)
                slicmod.save_superpixel_map(spx, self._spxm_path(image_id, k, flip))
                self._spx_cache[(image_id, k, flip)] = spx

    # ---- stages ---------------------------------------------------------

    def run_segment(self) -> None:
        tasks = [
            (i, self.config.main_k, False) for i in range(len(self.manifest.entries))
        ]
        self._precompute_segmentations(tasks)
        for task in tasks:
            self.spx(*task)

    def run_augment(self, chart: bool = False) -> list[aug.TrainingUnit]:
        train_ids = self.manifest.split_ids("train")
        if not train_ids:
            raise ValueError("manifest has no train entries")
        plan = self.config.plan()
        thresholds = self.config.thresholds()
        tasks = []
        for image_id in train_ids:
            tiers = aug.image_tiers(self.gt(image_id), self.classes, thresholds)
            tasks.extend(
                (image_id, k, flip)
                for k, flip in aug.required_segmentations(tiers, plan)
            )
        self._precompute_segmentations(tasks)
        units = aug.build_training_units(
            train_ids, self.gt, self.majority, self.classes, plan, thresholds
        )
        aug.save_units_csv(units, self.out / "units.csv")
        counts, proportions = aug.class_histogram(units, len(self.classes))
        aug.save_histogram_csv(counts, proportions, self.classes, self.out / "histogram.csv")
        if chart:
            aug.save_histogram_chart(counts, self.classes, self.out / "histogram.png")
        return units

    def run_train(self) -> sco.BaselineScorer:
        units = aug.load_units_csv(self.out / "units.csv")
        if not units:
            raise ValueError("units.csv is empty")
        groups: dict[tuple[int, int, bool], np.ndarray] = {}
        rows = []
        for u in units:
            key = (u.image_id, u.k, u.flipped)
            if key not in groups:
                groups[key] = self.features(*key)
            feats = groups[key]
            if u.segment_id >= len(feats):
                raise ValueError(
                    f"unit references missing segment {u.segment_id} of {key}"
                )
            rows.append(feats[u.segment_id])
        X = np.vstack(rows)
        y = np.array([u.class_index for u in units])
        model = sco.BaselineScorer(
            learning_rate=self.config.learning_rate,
            epochs=self.config.epochs,
            seed=self.config.seed,
        ).fit(X, y, n_classes=len(self.classes))
        sco.save_model(model, self.out / "model.bmdl")
        with open(self.out / "loss.csv", "w") as fh:
            fh.write("epoch,loss\n")
            for i, loss in enumerate(model.loss_history_):
                fh.write(f"{i},{loss:.12g}\n")
        return model

    def _score_path(self, image_id: int) -> Path:
        return self.scores_dir / f"img{image_id:04d}.spsc"

    def run_score(self) -> None:
        test_ids = self.manifest.split_ids("test")
        if not test_ids:
            raise ValueError("manifest has no test entries")
        self.scores_dir.mkdir(exist_ok=True)
        if self.config.scorer == "score-files":
            for image_id in test_ids:
                src = self.manifest.entries[image_id].scores
                if src is None:
                    raise ValueError(f"entry {image_id} has no score file")
                scores = sco.load_scores(src)
                if scores.shape != (
                    self.spx(image_id, self.config.main_k).n_segments,
                    len(self.classes),
                ):
                    raise ValueError(f"score file shape mismatch for entry {image_id}")
                sco.save_scores(scores, self._score_path(image_id))
            return
        if self.config.scorer != "baseline":
            raise ValueError(f"unknown scorer provider {self.config.scorer!r}")
        model = sco.load_model(self.out / "model.bmdl")
        self._precompute_segmentations(
            [(i, self.config.main_k, False) for i in test_ids]
        )
        for image_id in test_ids:
            feats = self.features(image_id, self.config.main_k, False)
            sco.save_scores(model.predict_proba(feats), self._score_path(image_id))

    def _global_feature(self, image_id: int) -> np.ndarray:
        entry = self.manifest.entries[image_id]
        if entry.features is not None:
            return ret.load_feature(entry.features)
        return ret.builtin_global_feature(self.lab(image_id))

    def _retrieval_path(self, image_id: int) -> Path:
        return self.retrieval_dir / f"img{image_id:04d}.json"

    def run_retrieve(self) -> None:
        train_ids = self.manifest.split_ids("train")
        test_ids = self.manifest.split_ids("test")
        if not train_ids or not test_ids:
            raise ValueError("retrieval needs both train and test entries")
        corpus = np.vstack([self._global_feature(i) for i in train_ids])
        retriever = ret.NearestImageRetriever(k=self.config.retrieval_k).fit(
            corpus, ids=np.array(train_ids)
        )
        self.retrieval_dir.mkdir(exist_ok=True)
        for image_id in test_ids:
            rset = retriever.retrieve(self._global_feature(image_id))
            with open(self._retrieval_path(image_id), "w") as fh:
                json.dump(
                    {
                        "ids": [int(i) for i in rset.ids],
                        "distances": [float(d) for d in rset.distances],
                    },
                    fh,
                    indent=2,
                )
                fh.write("\n")

    def _load_retrieval(self, image_id: int) -> ret.RetrievalSet:
        with open(self._retrieval_path(image_id)) as fh:
            data = json.load(fh)
        return ret.RetrievalSet(
            ids=np.array(data["ids"]), distances=np.array(data["distances"])
        )

    def run_label(
        self,
        no_mrf: bool = False,
        labels_name: str = "labels",
        trace: bool = False,
    ) -> None:
        test_ids = self.manifest.split_ids("test")
        labels_dir = self.out / labels_name
        labels_dir.mkdir(exist_ok=True)
        self.cooc_dir.mkdir(exist_ok=True)
        for image_id in test_ids:
            spx = self.spx(image_id, self.config.main_k)
            scores = sco.load_scores(self._score_path(image_id)).astype(np.float64)
            if no_mrf:
                node_labels = sco.argmax_labeling(scores)
            else:
                rset = self._load_retrieval(image_id)
                cooc = ctx.estimate_cooccurrence(
                    rset,
                    self.labeled_adjacency,
                    self.classes,
                    alpha=self.config.alpha,
                    floor=self.config.floor,
                )
                ctx.save_cooccurrence(
                    cooc,
                    self.classes,
                    self.cooc_dir / f"img{image_id:04d}.csv",
                    sidecar={
                        "k": self.config.retrieval_k,
                        "retrieval_ids": [int(i) for i in rset.ids],
                    },
                )
                problem = mrfmod.MRFProblem(
                    scores=scores,
                    graph=ctx.build_adjacency(spx),
                    cooccurrence=cooc,
                    lam=self.config.lam,
                    hard=self.config.hard_mrf,
                )
                result = mrfmod.solve(problem, method=self.config.mrf_method)
                node_labels = result.labels
                if trace:
                    with open(labels_dir / f"img{image_id:04d}_trace.jsonl", "w") as fh:
                        for move in result.moves:
                            fh.write(json.dumps(move) + "\n")
            pixel_labels = node_labels.astype(np.uint8)[spx.assignment]
            save_label_map(
                LabelMap(pixel_labels), labels_dir / f"img{image_id:04d}.png"
            )

    def run_eval(self, labels_name: str = "labels", report_name: str = "report.json") -> dict:
        test_ids = self.manifest.split_ids("test")
        labels_dir = self.out / labels_name
        confusion = met.ConfusionMatrix(len(self.classes))
        for image_id in test_ids:
            predicted = load_label_map(
                labels_dir / f"img{image_id:04d}.png", self.classes
            )
            confusion.accumulate(predicted, self.gt(image_id))
        met.save_report(confusion, self.classes, self.out / report_name)
        print(met.format_report(confusion, self.classes))
        return met.report_dict(confusion, self.classes)

    def run_render(self, labels_name: str = "labels") -> None:
        test_ids = self.manifest.split_ids("test")
        labels_dir = self.out / labels_name
        render_dir = self.out / "render"
        render_dir.mkdir(exist_ok=True)
        for image_id in test_ids:
            predicted = load_label_map(
                labels_dir / f"img{image_id:04d}.png", self.classes
            )
            save_rgb(
                render_label_map(predicted, self.classes),
                render_dir / f"img{image_id:04d}.png",
            )

    def run_pipeline(self, chart: bool = False, trace: bool = False) -> dict:
        self.run_segment()
        self.run_augment(chart=chart)
        self.run_train()
        self.run_score()
        self.run_retrieve()
        self.run_label(trace=trace)
        report = self.run_eval()
        self.run_render()
        return report


def open_run(manifest_path, config: PipelineConfig, out_dir) -> PipelineRun:
    manifest = load_manifest(manifest_path)
    return PipelineRun(manifest, config, out_dir)
