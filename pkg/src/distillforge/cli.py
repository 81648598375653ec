"""distill-forge command line interface.

Each subcommand runs one pipeline stage against a run directory:

    distill-forge ingest --run-dir runs/a --corpus data/corpus --seed 7
    distill-forge verbalize --run-dir runs/a
    distill-forge prompt --run-dir runs/a
    distill-forge label --run-dir runs/a --stub-teacher
    distill-forge build-epoch --run-dir runs/a --epoch 1
    # train externally, drop predictions.jsonl into the run dir, then:
    distill-forge build-epoch --run-dir runs/a --epoch 2
    distill-forge evaluate --run-dir runs/a
    distill-forge report --run-dir runs/a

Exit codes: 0 success, 2 validation failure, 3 teacher service failure.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .errors import TeacherServiceError, ValidationError
from .metrics import ANLS_THRESHOLD


def _add_run_dir(parser: argparse.ArgumentParser):
    parser.add_argument("--run-dir", required=True, help="directory holding all stage artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distill-forge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a corpus and carve the eval_base split")
    _add_run_dir(p)
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--format", default="native-jsonl", choices=("native-jsonl", "due-style"))
    p.add_argument("--dataset-tag", default=None, help="dataset tag hint (due-style corpora)")
    p.add_argument("--task-kind", default=None, help="task kind hint (due-style corpora)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", default="B", choices=pipeline.SCHEDULE_NAMES)
    p.add_argument("--epochs", type=int, default=8, help="total training epochs")
    p.add_argument("--eval-fraction", type=float, default=0.1)
    p.add_argument("--group-tags", default="WebSRC", help="comma-separated dataset tags whose questions are grouped per document")
    p.add_argument("--max-group", type=int, default=10)
    p.add_argument("--model", default=None, help="teacher model name")
    p.add_argument("--similarity-variant", default="max_length", choices=("max_length", "generalized"))
    p.add_argument("--sampling-mode", default="without_replacement", choices=("without_replacement", "with_replacement"))
    p.add_argument("--template-dir", default=None, help="prompt template directory (default: built-in templates)")
    p.add_argument("--endpoint", default=None, help="teacher endpoint URL, stored for later `label` runs")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verbalize", help="render documents into layout-preserving text")
    _add_run_dir(p)
    p.set_defaults(func=cmd_verbalize)

    p = sub.add_parser("prompt", help="fill prompt templates for every sample")
    _add_run_dir(p)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("label", help="request teacher labels for the train pool")
    _add_run_dir(p)
    p.add_argument("--endpoint", default=None, help="teacher endpoint URL (overrides the stored one)")
    p.add_argument("--stub-teacher", action="store_true", help="use the built-in deterministic stub server")
    p.add_argument("--jobs", type=int, default=None, help="max concurrent teacher requests")
    p.add_argument("--max-retries", type=int, default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("build-epoch", help="emit one epoch dataset for the trainer")
    _add_run_dir(p)
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--similarity-epoch", type=int, default=None, help="predictions epoch to score difficulty from (default 1)")
    p.add_argument("--drawn-size", type=int, default=None, help="samples to draw (default: full pool)")
    p.add_argument("--model-tag", default=None, help="restrict predictions to one model tag")
    p.set_defaults(func=cmd_build_epoch)

    p = sub.add_parser("evaluate", help="score test-split predictions")
    _add_run_dir(p)
    p.add_argument("--epoch", type=int, default=None, help="predictions epoch (default: latest present)")
    p.add_argument("--model-tag", default=None)
    p.add_argument("--anls-threshold", type=float, default=ANLS_THRESHOLD)
    p.add_argument(
        "--metric-override",
        action="append",
        default=[],
        metavar="TAG=METRIC",
        help="route a dataset tag to a metric (repeatable)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print metrics and curriculum statistics")
    _add_run_dir(p)
    p.set_defaults(func=cmd_report)
    return parser


def cmd_ingest(args) -> int:
    config_kwargs = dict(
        seed=args.seed,
        schedule=args.schedule,
        total_epochs=args.epochs,
        eval_fraction=args.eval_fraction,
        group_tags=tuple(t for t in args.group_tags.split(",") if t),
        max_group=args.max_group,
        similarity_variant=args.similarity_variant,
        sampling_mode=args.sampling_mode,
        template_dir=args.template_dir,
    )
    if args.model is not None:
        config_kwargs["model_name"] = args.model
    if args.endpoint is not None:
        config_kwargs["endpoint_url"] = args.endpoint
    config = pipeline.RunConfig(**config_kwargs)
    result = pipeline.run_ingest(
        pipeline.RunPaths(args.run_dir),
        corpus_path=args.corpus,
        corpus_format=args.format,
        dataset_tag=args.dataset_tag,
        task_kind=args.task_kind,
        config=config,
    )
    print(f"ingest: {result['documents']} documents, {result['samples']} samples")
    print(f"split: train={result['train']} eval_base={result['eval']} test={result['test']}")
    for tag in sorted(result["counts"]):
        per_split = result["counts"][tag]
        shown = " ".join(f"{split}={n}" for split, n in sorted(per_split.items()) if n)
        print(f"  {tag}: {shown or 'empty'}")
    return 0


def cmd_verbalize(args) -> int:
    result = pipeline.run_verbalize(pipeline.RunPaths(args.run_dir))
    if result["skipped"]:
        print("verbalize: up to date, skipped")
    else:
        print(f"verbalize: {result['documents']} documents rendered")
    return 0


def cmd_prompt(args) -> int:
    result = pipeline.run_prompt(pipeline.RunPaths(args.run_dir))
    if result["skipped"]:
        print("prompt: up to date, skipped")
    else:
        print(f"prompt: {result['prompts']} prompts rendered")
    return 0


def cmd_label(args) -> int:
    result = pipeline.run_label(
        pipeline.RunPaths(args.run_dir),
        endpoint_url=args.endpoint,
        jobs=args.jobs,
        stub=args.stub_teacher,
        max_retries=args.max_retries,
    )
    if result["skipped"]:
        print("label: up to date, skipped")
        return 0
    report = result["report"]
    print(f"label: {result['labeled']}/{result['pool']} pool samples labeled")
    if report:
        print(
            "  cache_hits={cache_hits} calls={calls} failures={failures} parse_failures={parse_failures}".format(
                **report
            )
        )
    return 0


def cmd_build_epoch(args) -> int:
    result = pipeline.run_build_epoch(
        pipeline.RunPaths(args.run_dir),
        epoch=args.epoch,
        similarity_epoch=args.similarity_epoch,
        drawn_size=args.drawn_size,
        model_tag=args.model_tag,
    )
    tau = "none" if result["tau"] is None else f"{result['tau']:g}"
    print(f"build-epoch {result['epoch']}: {result['examples']} examples (tau={tau}, mode={result['mode']})")
    return 0


def cmd_evaluate(args) -> int:
    overrides = {}
    for item in args.metric_override:
        if "=" not in item:
            raise ValidationError(f"--metric-override expects TAG=METRIC, got {item!r}")
        tag, metric = item.split("=", 1)
        overrides[tag] = metric
    result = pipeline.run_evaluate(
        pipeline.RunPaths(args.run_dir),
        epoch=args.epoch,
        model_tag=args.model_tag,
        anls_threshold=args.anls_threshold,
        metric_overrides=overrides or None,
    )
    print(f"evaluate: epoch {result['epoch']}, model {result['model_tag']}")
    for tag in sorted(result["per_dataset"]):
        row = result["per_dataset"][tag]
        print(f"  {tag}: {row['metric_name']}={row['value']:.4f} (n={row['n_samples']})")
    print(f"  average: {result['average']:.4f}")
    return 0


def cmd_report(args) -> int:
    result = pipeline.run_report(pipeline.RunPaths(args.run_dir))
    report = result["report"]
    print(f"report (config {result['config_hash'][:12]})")
    print(f"evaluation: epoch {report['epoch']}, model {report['model_tag']}")
    for tag in sorted(report["per_dataset"]):
        row = report["per_dataset"][tag]
        print(f"  {tag}: {row['metric_name']}={row['value']:.4f} (n={row['n_samples']})")
    print(f"  average: {report['average']:.4f}")
    print("curriculum:")
    for manifest in result["epochs"]:
        deciles = manifest.get("decile_mean_similarity") or []
        if deciles:
            shown = " ".join(f"{v:.3f}" for v in deciles)
            print(f"  epoch {manifest['epoch']} (tau={manifest['tau']:g}): decile mean similarity {shown}")
        else:
            print(f"  epoch {manifest['epoch']}: unweighted ({manifest['drawn_size']} samples)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TeacherServiceError as exc:
        print(f"teacher service error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
