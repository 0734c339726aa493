"""Command-line driver: synth, segment, augment, train, score, retrieve,
label, eval, render, pipeline.

Configuration lives in a TOML file (see PipelineConfig for keys); flags
override the file, and the effective config is snapshotted into the output
directory. Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, replace

from .pipeline import PipelineConfig, load_config, open_run
from .synth import PROFILES, generate_dataset


def _add_common(parser, needs_manifest=True):
    parser.add_argument("--manifest", required=needs_manifest, help="dataset manifest JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--workers", type=int, help="worker processes (0 = all cores)")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--main-k", type=int, dest="main_k", help="main superpixel count")
    parser.add_argument("--retrieval-k", type=int, dest="retrieval_k")
    parser.add_argument("--lambda", type=float, dest="lam", help="smoothness constant")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--scorer", choices=["baseline", "score-files"])
    parser.add_argument("--alpha", type=float, help="co-occurrence smoothing")
    parser.add_argument("--floor", type=float, help="co-occurrence probability floor")
    parser.add_argument("--resize", type=int, help="resize images to this square size")
    parser.add_argument(
        "--shift-ablation",
        action="store_const",
        const=True,
        dest="shift_ablation",
        help="randomly displace superpixel locations (prior ablation)",
    )
    parser.add_argument(
        "--hard-mrf",
        action="store_const",
        const=True,
        dest="hard_mrf",
        help="uniform edge weights instead of score distances",
    )
    parser.add_argument(
        "--mrf-method", choices=["swap", "expansion"], dest="mrf_method"
    )


def _add_label_flags(parser):
    parser.add_argument("--no-mrf", action="store_true", help="stop at the initial argmax labeling")
    parser.add_argument("--labels-name", default="labels", help="output subdirectory for label maps")
    parser.add_argument("--trace", action="store_true", help="write accepted-move traces")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streetlabel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise", type=float, default=8.0)
    p.add_argument("--profile", choices=PROFILES, default="street")

    for name in ("segment", "train", "score", "retrieve"):
        _add_common(sub.add_parser(name, help=f"run the {name} stage"))

    p = sub.add_parser("augment", help="build the expanded training-unit list")
    _add_common(p)
    p.add_argument("--chart", action="store_true", help="also render a histogram PNG")

    p = sub.add_parser("label", help="argmax labeling plus graph-cut refinement")
    _add_common(p)
    _add_label_flags(p)

    p = sub.add_parser("eval", help="score predicted label maps against ground truth")
    _add_common(p)
    p.add_argument("--labels-name", default="labels")
    p.add_argument("--report", default="report.json")

    p = sub.add_parser("render", help="render predicted label maps to color PNGs")
    _add_common(p)
    p.add_argument("--labels-name", default="labels")

    p = sub.add_parser("pipeline", help="run every stage in order")
    _add_common(p)
    p.add_argument("--chart", action="store_true")
    p.add_argument("--trace", action="store_true")
    return parser


_CONFIG_KEYS = set(asdict(PipelineConfig()))


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key in _CONFIG_KEYS and value is not None
    }
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            path = generate_dataset(
                args.out,
                n_train=args.n_train,
                n_test=args.n_test,
                size=args.size,
                seed=args.seed,
                noise=args.noise,
                profile=args.profile,
            )
            print(path)
            return 0
        run = open_run(args.manifest, resolve_config(args), args.out)
        if args.command == "segment":
            run.run_segment()
        elif args.command == "augment":
            run.run_augment(chart=args.chart)
        elif args.command == "train":
            run.run_train()
        elif args.command == "score":
            run.run_score()
        elif args.command == "retrieve":
            run.run_retrieve()
        elif args.command == "label":
            run.run_label(
                no_mrf=args.no_mrf, labels_name=args.labels_name, trace=args.trace
            )
        elif args.command == "eval":
            run.run_eval(labels_name=args.labels_name, report_name=args.report)
        elif args.command == "render":
            run.run_render(labels_name=args.labels_name)
        elif args.command == "pipeline":
            run.run_pipeline(chart=args.chart, trace=args.trace)
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"streetlabel {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
