"""Run-directory orchestration: stage files, config hashing, idempotence.

Every pipeline stage reads files from a run directory and writes files
back into it, so an 8-epoch loop that alternates with an external trainer
can stop and resume at any boundary:

    config.json         run configuration + its hash
    documents.jsonl     normalized corpus (ingest)
    samples.jsonl       task samples, grouped where configured (ingest)
    split.json          train/eval_base membership (ingest)
    verbalized.jsonl    layout-preserving page text (verbalize)
    prompts.jsonl       rendered prompts for all samples (prompt)
    labels.jsonl        teacher targets for the train pool (label)
    predictions.jsonl   student outputs, written by the trainer
    similarities.jsonl  per-sample difficulty (build-epoch)
    epochs/             eval_this.json, epoch_<n>.manifest.json, epoch_<n>.jsonl
    report.json         evaluation results (evaluate)
    state.json          content hashes for no-op re-runs

Artifacts never embed timestamps, so identical inputs and seeds reproduce
byte-identical outputs. JSONL stage outputs carry a .meta.json sidecar
with the config hash; JSON artifacts embed the hash directly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import mean
from typing import Iterable, Sequence

from . import curriculum, ingest, metrics, prompting, teacher, verbalizer
from .errors import TeacherServiceError, ValidationError
from .jsonl import file_sha256, read_json, read_jsonl, write_json, write_jsonl

logger = logging.getLogger(__name__)

SCHEDULE_NAMES = tuple(sorted(curriculum.NAMED_SCHEDULES))


@dataclass(frozen=True)
class RunConfig:
    """Reproducibility-relevant settings for one run directory.

    ``config_hash`` covers every field that shapes artifact content; the
    endpoint URL is transport, not content, so it is stored but unhashed.
    """

    seed: int = 0
    schedule: str = "B"
    total_epochs: int = 8
    eval_fraction: float = 0.1
    similarity_variant: str = "max_length"
    sampling_mode: str = "without_replacement"
    model_name: str = teacher.DEFAULT_MODEL
    group_tags: tuple = ("WebSRC",)
    max_group: int = 10
    template_dir: str | None = None
    templates_hash: str = ""
    endpoint_url: str = ""

    def __post_init__(self):
        if self.schedule not in curriculum.NAMED_SCHEDULES:
            raise ValidationError(f"unknown schedule {self.schedule!r} (expected one of {SCHEDULE_NAMES})")
        if self.sampling_mode not in curriculum.SAMPLING_MODES:
            raise ValidationError(f"unknown sampling mode {self.sampling_mode!r}")
        if self.similarity_variant not in ("max_length", "generalized"):
            raise ValidationError(f"unknown similarity variant {self.similarity_variant!r}")
        if self.total_epochs < 2:
            raise ValidationError("total_epochs must be at least 2")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValidationError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")
        if self.max_group < 1:
            raise ValidationError("max_group must be at least 1")
        unknown = set(self.group_tags) - set(ingest.DATASET_TAGS)
        if unknown:
            raise ValidationError(f"unknown group tags: {sorted(unknown)}")

    @property
    def config_hash(self) -> str:
        hashed = {
            "seed": self.seed,
            "schedule": self.schedule,
            "total_epochs": self.total_epochs,
            "eval_fraction": self.eval_fraction,
            "similarity_variant": self.similarity_variant,
            "sampling_mode": self.sampling_mode,
            "model_name": self.model_name,
            "group_tags": list(self.group_tags),
            "max_group": self.max_group,
            "templates_hash": self.templates_hash,
        }
        payload = json.dumps(hashed, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "schedule": self.schedule,
            "total_epochs": self.total_epochs,
            "eval_fraction": self.eval_fraction,
            "similarity_variant": self.similarity_variant,
            "sampling_mode": self.sampling_mode,
            "model_name": self.model_name,
            "group_tags": list(self.group_tags),
            "max_group": self.max_group,
            "template_dir": self.template_dir,
            "templates_hash": self.templates_hash,
            "endpoint_url": self.endpoint_url,
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        try:
            config = cls(
                seed=int(obj["seed"]),
                schedule=str(obj["schedule"]),
                total_epochs=int(obj["total_epochs"]),
                eval_fraction=float(obj["eval_fraction"]),
                similarity_variant=str(obj["similarity_variant"]),
                sampling_mode=str(obj["sampling_mode"]),
                model_name=str(obj["model_name"]),
                group_tags=tuple(obj["group_tags"]),
                max_group=int(obj["max_group"]),
                template_dir=obj.get("template_dir"),
                templates_hash=str(obj.get("templates_hash", "")),
                endpoint_url=str(obj.get("endpoint_url", "")),
            )
        except KeyError as exc:
            raise ValidationError(f"run config missing field {exc}") from exc
        stored = obj.get("config_hash")
        if stored is not None and stored != config.config_hash:
            raise ValidationError("config.json hash does not match its settings; the file was edited")
        return config


class RunPaths:
    """Locations of every stage artifact inside one run directory."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.config = self.run_dir / "config.json"
        self.documents = self.run_dir / "documents.jsonl"
        self.samples = self.run_dir / "samples.jsonl"
        self.split = self.run_dir / "split.json"
        self.verbalized = self.run_dir / "verbalized.jsonl"
        self.prompts = self.run_dir / "prompts.jsonl"
        self.labels = self.run_dir / "labels.jsonl"
        self.predictions = self.run_dir / "predictions.jsonl"
        self.similarities = self.run_dir / "similarities.jsonl"
        self.report = self.run_dir / "report.json"
        self.state = self.run_dir / "state.json"
        self.epochs_dir = self.run_dir / "epochs"
        self.eval_this = self.epochs_dir / "eval_this.json"
        self.teacher_cache = self.run_dir / "teacher_cache"

    def epoch_manifest(self, epoch: int) -> Path:
        return self.epochs_dir / f"epoch_{epoch}.manifest.json"

    def epoch_dataset(self, epoch: int) -> Path:
        return self.epochs_dir / f"epoch_{epoch}.jsonl"

    def meta(self, artifact: Path) -> Path:
        return artifact.with_name(artifact.name + ".meta.json")


def require_file(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise ValidationError(f"{path.name} not found in {path.parent}; run `distill-forge {produced_by}` first")
    return path


def load_config(paths: RunPaths) -> RunConfig:
    require_file(paths.config, "ingest")
    return RunConfig.from_json(read_json(paths.config))


def write_meta(paths: RunPaths, artifact: Path, config: RunConfig, rows: int):
    write_json(paths.meta(artifact), {"config_hash": config.config_hash, "rows": rows})


# --------------------------------------------------------------------------
# Idempotence bookkeeping
# --------------------------------------------------------------------------

def _load_state(paths: RunPaths) -> dict:
    if paths.state.exists():
        return read_json(paths.state)
    return {"stages": {}}


def _fingerprint(files: Iterable[Path], config: RunConfig) -> dict:
    out = {"__config__": config.config_hash}
    for path in files:
        out[path.name] = file_sha256(path) if path.exists() else None
    return out


def stage_is_current(paths: RunPaths, stage: str, inputs: Sequence[Path], outputs: Sequence[Path], config: RunConfig) -> bool:
    """True when this stage already ran on identical inputs and its outputs are intact."""
    record = _load_state(paths)["stages"].get(stage)
    if record is None:
        return False
    if record["inputs"] != _fingerprint(inputs, config):
        return False
    for path in outputs:
        if not path.exists():
            return False
    return record["outputs"] == _fingerprint(outputs, config)


def record_stage(paths: RunPaths, stage: str, inputs: Sequence[Path], outputs: Sequence[Path], config: RunConfig):
    state = _load_state(paths)
    state["stages"][stage] = {
        "inputs": _fingerprint(inputs, config),
        "outputs": _fingerprint(outputs, config),
    }
    write_json(paths.state, state)


# --------------------------------------------------------------------------
# Shared loading helpers
# --------------------------------------------------------------------------

def load_documents(paths: RunPaths) -> list[ingest.Document]:
    require_file(paths.documents, "ingest")
    return [ingest.document_from_row(row) for _, row in read_jsonl(paths.documents)]


def load_samples(paths: RunPaths) -> list[ingest.TaskSample]:
    require_file(paths.samples, "ingest")
    return [ingest.sample_from_row(row) for _, row in read_jsonl(paths.samples)]


def load_split(paths: RunPaths) -> ingest.SplitManifest:
    require_file(paths.split, "ingest")
    return ingest.SplitManifest.from_json(read_json(paths.split))


def load_prompts(paths: RunPaths) -> dict[str, prompting.PromptRecord]:
    require_file(paths.prompts, "prompt")
    prompts = {}
    for _, row in read_jsonl(paths.prompts):
        record = prompting.PromptRecord.from_row(row)
        prompts[record.sample_id] = record
    return prompts


def load_labels(paths: RunPaths) -> dict[str, teacher.TeacherLabel]:
    require_file(paths.labels, "label")
    labels = {}
    for _, row in read_jsonl(paths.labels):
        record = teacher.TeacherLabel.from_row(row)
        labels[record.sample_id] = record
    return labels


def load_predictions(paths: RunPaths) -> list[curriculum.PredictionRecord]:
    require_file(paths.predictions, "a trainer (predictions.jsonl is produced by the student)")
    return [curriculum.PredictionRecord.from_row(row) for _, row in read_jsonl(paths.predictions)]


def resolve_templates(config: RunConfig) -> dict[str, prompting.PromptTemplate]:
    if config.template_dir is None:
        return prompting.load_builtin_templates()
    root = Path(config.template_dir)
    if not root.is_dir():
        raise ValidationError(f"template dir does not exist: {root}")
    templates: dict[str, prompting.PromptTemplate] = {}
    for path in sorted(root.glob("*.json")):
        template = prompting.load_template(path)
        if template.task_kind in templates:
            raise ValidationError(f"duplicate template for {template.task_kind} in {root}")
        templates[template.task_kind] = template
    if not templates:
        raise ValidationError(f"no *.json templates found in {root}")
    return templates


def hash_templates(template_dir: str | None) -> str:
    """Content hash of the active template set (builtin or a directory)."""
    if template_dir is None:
        from importlib import resources

        root = resources.files("distillforge").joinpath("templates")
        entries = sorted((e for e in root.iterdir() if e.name.endswith(".json")), key=lambda e: e.name)
    else:
        dir_path = Path(template_dir)
        if not dir_path.is_dir():
            raise ValidationError(f"template dir does not exist: {dir_path}")
        entries = sorted(dir_path.glob("*.json"))
    digest = hashlib.sha256()
    for entry in entries:
        digest.update(entry.name.encode("utf-8"))
        digest.update(entry.read_bytes())
    return digest.hexdigest()


# --------------------------------------------------------------------------
# Stage implementations
# --------------------------------------------------------------------------

def run_ingest(
    paths: RunPaths,
    corpus_path: str,
    corpus_format: str = "native-jsonl",
    dataset_tag: str | None = None,
    task_kind: str | None = None,
    config: RunConfig | None = None,
) -> dict:
    """Normalize a corpus into the run dir and carve the eval_base split."""
    paths.run_dir.mkdir(parents=True, exist_ok=True)
    if config is None:
        config = RunConfig()
    config = replace(config, templates_hash=hash_templates(config.template_dir))
    if paths.config.exists():
        existing = RunConfig.from_json(read_json(paths.config))
        if existing.config_hash != config.config_hash:
            raise ValidationError(
                f"{paths.config} already holds a different configuration; use a fresh --run-dir"
            )
        config = existing

    documents, samples = ingest.load_corpus(
        corpus_path, format=corpus_format, dataset_tag=dataset_tag, task_kind=task_kind
    )
    samples = group_corpus(samples, {d.doc_id: d.dataset_tag for d in documents}, config)

    seen = set()
    for sample in samples:
        if sample.sample_id in seen:
            raise ValidationError(f"grouping produced duplicate sample_id {sample.sample_id!r}")
        seen.add(sample.sample_id)

    train_ids = [s.sample_id for s in samples if s.split == "train"]
    if not train_ids:
        raise ValidationError("corpus has no train-split samples")
    split = ingest.make_split(train_ids, config.eval_fraction, config.seed)

    write_json(paths.config, config.to_json())
    write_jsonl(paths.documents, (ingest.document_to_row(d) for d in documents))
    write_jsonl(paths.samples, (ingest.sample_to_row(s) for s in samples))
    split_obj = split.to_json()
    split_obj["config_hash"] = config.config_hash
    write_json(paths.split, split_obj)
    write_meta(paths, paths.documents, config, len(documents))
    write_meta(paths, paths.samples, config, len(samples))

    counts = ingest.corpus_counts(documents, samples)
    record_stage(paths, "ingest", [], [paths.documents, paths.samples, paths.split], config)
    return {
        "documents": len(documents),
        "samples": len(samples),
        "train": split.train_count,
        "eval": split.eval_count,
        "test": sum(1 for s in samples if s.split == "test"),
        "counts": counts,
    }


def group_corpus(
    samples: Sequence[ingest.TaskSample],
    tags_by_doc: dict,
    config: RunConfig,
) -> list[ingest.TaskSample]:
    """Group per-document questions for the configured dataset tags.

    Grouped samples replace the document's originals at its first position
    in file order, so output order is deterministic.
    """
    grouped_tags = set(config.group_tags)
    by_doc: dict[str, list[ingest.TaskSample]] = {}
    for sample in samples:
        if tags_by_doc[sample.doc_id] in grouped_tags:
            by_doc.setdefault(sample.doc_id, []).append(sample)

    out: list[ingest.TaskSample] = []
    emitted: set[str] = set()
    for sample in samples:
        if tags_by_doc[sample.doc_id] not in grouped_tags:
            out.append(sample)
            continue
        if sample.doc_id in emitted:
            continue
        emitted.add(sample.doc_id)
        out.extend(ingest.group_questions(by_doc[sample.doc_id], config.max_group))
    return out


def run_verbalize(paths: RunPaths) -> dict:
    config = load_config(paths)
    inputs = [paths.config, require_file(paths.documents, "ingest")]
    outputs = [paths.verbalized]
    if stage_is_current(paths, "verbalize", inputs, outputs, config):
        return {"skipped": True, "documents": 0}
    documents = load_documents(paths)
    rows = []
    for document in documents:
        rows.append(verbalizer.verbalize(document).to_row())
    write_jsonl(paths.verbalized, rows)
    write_meta(paths, paths.verbalized, config, len(rows))
    record_stage(paths, "verbalize", inputs, outputs, config)
    return {"skipped": False, "documents": len(rows)}


def run_prompt(paths: RunPaths) -> dict:
    config = load_config(paths)
    inputs = [paths.config, require_file(paths.samples, "ingest"), require_file(paths.verbalized, "verbalize")]
    outputs = [paths.prompts]
    if stage_is_current(paths, "prompt", inputs, outputs, config):
        return {"skipped": True, "prompts": 0}
    templates = resolve_templates(config)
    verbalized = {}
    for _, row in read_jsonl(paths.verbalized):
        record = verbalizer.VerbalizedDocument.from_row(row)
        verbalized[record.doc_id] = record
    samples = load_samples(paths)
    rows = []
    for sample in samples:
        if sample.doc_id not in verbalized:
            raise ValidationError(f"sample {sample.sample_id!r}: document {sample.doc_id!r} was not verbalized")
        if sample.task_kind not in templates:
            raise ValidationError(f"no template for task kind {sample.task_kind}")
        record = prompting.build_prompt(sample, verbalized[sample.doc_id], templates[sample.task_kind])
        rows.append(record.to_row())
    write_jsonl(paths.prompts, rows)
    write_meta(paths, paths.prompts, config, len(rows))
    record_stage(paths, "prompt", inputs, outputs, config)
    return {"skipped": False, "prompts": len(rows)}


def run_label(
    paths: RunPaths,
    endpoint_url: str | None = None,
    jobs: int | None = None,
    stub: bool = False,
    max_retries: int | None = None,
) -> dict:
    """Teacher-label the train pool (train + eval_base ids)."""
    config = load_config(paths)
    inputs = [paths.config, require_file(paths.prompts, "prompt"), require_file(paths.split, "ingest")]
    outputs = [paths.labels]
    if stage_is_current(paths, "label", inputs, outputs, config):
        return {"skipped": True, "labeled": 0, "report": {}}

    split = load_split(paths)
    pool_ids = list(split.member_ids["train"]) + list(split.member_ids["eval"])
    prompts = load_prompts(paths)
    missing_prompts = [i for i in pool_ids if i not in prompts]
    if missing_prompts:
        raise ValidationError(f"prompts.jsonl lacks {len(missing_prompts)} pool samples; rerun `distill-forge prompt`")

    existing: dict[str, teacher.TeacherLabel] = {}
    if paths.labels.exists():
        existing = load_labels(paths)
    todo = [prompts[i] for i in pool_ids if i not in existing]

    report = {"cache_hits": 0, "calls": 0, "failures": 0, "parse_failures": 0}
    new_labels: list[teacher.TeacherLabel] = []
    if todo:
        server = None
        try:
            if stub:
                from .stub import StubTeacherServer

                server = StubTeacherServer().start()
                endpoint = server.endpoint_url
            else:
                endpoint = endpoint_url or config.endpoint_url
                if not endpoint:
                    raise ValidationError("no teacher endpoint configured; pass --endpoint or --stub-teacher")
            teacher_config = teacher.TeacherConfig(
                endpoint_url=endpoint,
                model_name=config.model_name,
                cache_dir=str(paths.teacher_cache),
                max_concurrent_requests=jobs or 4,
                max_retries=max_retries if max_retries is not None else 5,
                backoff_seconds=(0.1, 0.5, 1.0, 2.0, 4.0) if stub else (0.5, 1.0, 2.0, 4.0, 8.0),
            )
            new_labels, report = teacher.label_batch(todo, teacher_config)
        finally:
            if server is not None:
                server.stop()

    by_id = dict(existing)
    for lab in new_labels:
        by_id[lab.sample_id] = lab
    ordered = [by_id[i] for i in pool_ids if i in by_id]
    write_jsonl(paths.labels, (lab.to_row() for lab in ordered))
    write_meta(paths, paths.labels, config, len(ordered))
    if len(ordered) == len(pool_ids):
        record_stage(paths, "label", inputs, outputs, config)
    if report.get("failures"):
        # partial labels stay on disk; a rerun only requests the missing ids
        raise TeacherServiceError(
            f"{report['failures']} of {len(todo)} teacher requests failed; "
            "rerun `distill-forge label` to retry the missing samples"
        )
    return {"skipped": False, "labeled": len(ordered), "pool": len(pool_ids), "report": report}


def _carve_eval_this(paths: RunPaths, config: RunConfig, split: ingest.SplitManifest) -> ingest.SplitManifest:
    """Fixed eval_this split over the train ids, created once at epoch 2."""
    if paths.eval_this.exists():
        return ingest.SplitManifest.from_json(read_json(paths.eval_this))
    train_ids = list(split.member_ids["train"])
    fraction = split.eval_count / len(train_ids)
    inner = ingest.make_split(train_ids, fraction, ingest.derive_seed(config.seed, "eval_this"))
    obj = inner.to_json()
    obj["config_hash"] = config.config_hash
    paths.epochs_dir.mkdir(parents=True, exist_ok=True)
    write_json(paths.eval_this, obj)
    return inner


def _decile_means(ordered_ids: Sequence[str], sims: dict) -> list[float]:
    values = [sims[i] for i in ordered_ids if i in sims]
    if not values:
        return []
    out = []
    n = len(values)
    for k in range(10):
        lo, hi = (k * n) // 10, ((k + 1) * n) // 10
        out.append(mean(values[lo:hi]) if hi > lo else 0.0)
    return out


def run_build_epoch(
    paths: RunPaths,
    epoch: int,
    similarity_epoch: int | None = None,
    drawn_size: int | None = None,
    model_tag: str | None = None,
) -> dict:
    """Emit epochs/epoch_<n>.jsonl (+ manifest) for the trainer."""
    config = load_config(paths)
    if not 1 <= epoch <= config.total_epochs:
        raise ValidationError(f"epoch {epoch} out of range [1, {config.total_epochs}]")
    split = load_split(paths)
    prompts = load_prompts(paths)
    labels = load_labels(paths)
    samples = {s.sample_id: s for s in load_samples(paths)}
    paths.epochs_dir.mkdir(parents=True, exist_ok=True)

    if epoch == 1:
        pool_ids = list(split.member_ids["train"])
        ordered = pool_ids
        manifest = {
            "epoch": 1,
            "tau": None,
            "schedule": config.schedule,
            "seed": config.seed,
            "pool_size": len(pool_ids),
            "drawn_size": len(ordered),
            "mode": "unweighted",
            "similarity_source_epoch": None,
            "decile_mean_similarity": [],
            "config_hash": config.config_hash,
        }
        sims: dict[str, float] = {}
    else:
        source_epoch = similarity_epoch if similarity_epoch is not None else 1
        predictions = _select_predictions(load_predictions(paths), source_epoch, model_tag)
        eval_this = _carve_eval_this(paths, config, split)
        pool_ids = list(eval_this.member_ids["train"])

        missing_labels = [i for i in pool_ids if i not in labels]
        if missing_labels:
            raise ValidationError(
                f"labels.jsonl lacks {len(missing_labels)} pool samples; run `distill-forge label`"
            )
        targets = {i: labels[i].canonical_target for i in pool_ids}
        scores, missing = curriculum.score_pool(predictions, targets, variant=config.similarity_variant)
        sims = dict(scores)
        write_jsonl(paths.similarities, ({"sample_id": i, "similarity": v} for i, v in scores))
        write_meta(paths, paths.similarities, config, len(scores))

        tau = curriculum.schedule_tau(
            curriculum.CurriculumSchedule.named(config.schedule, config.total_epochs), epoch
        )
        size = drawn_size if drawn_size is not None else len(pool_ids)
        ordered_pool = [(i, sims[i]) for i in pool_ids]
        dataset = curriculum.build_epoch(
            ordered_pool,
            tau=tau,
            drawn_size=size,
            seed=ingest.derive_seed(config.seed, f"epoch:{epoch}"),
            mode=config.sampling_mode,
            epoch=epoch,
            schedule_name=config.schedule,
            similarity_source_epoch=source_epoch,
        )
        ordered = dataset.ordered_sample_ids
        manifest = dict(dataset.manifest)
        manifest.update(
            {
                "epoch": epoch,
                "tau": tau,
                "missing_predictions": len(missing),
                "decile_mean_similarity": _decile_means(ordered, sims),
                "config_hash": config.config_hash,
            }
        )

    rows = []
    for sample_id in ordered:
        if sample_id not in prompts:
            raise ValidationError(f"prompts.jsonl lacks sample {sample_id!r}; rerun `distill-forge prompt`")
        if sample_id not in labels:
            raise ValidationError(f"labels.jsonl lacks sample {sample_id!r}; run `distill-forge label`")
        example = curriculum.DistillationExample(
            sample_id=sample_id,
            prompt=prompts[sample_id].prompt_text,
            target=labels[sample_id].canonical_target,
            gold=dict(samples[sample_id].gold_answers),
        )
        rows.append(example.to_row())
    write_jsonl(paths.epoch_dataset(epoch), rows)
    manifest["dataset_sha256"] = file_sha256(paths.epoch_dataset(epoch))
    write_json(paths.epoch_manifest(epoch), manifest)
    return {"epoch": epoch, "examples": len(rows), "tau": manifest["tau"], "mode": manifest["mode"]}


def _select_predictions(
    records: list[curriculum.PredictionRecord],
    epoch: int,
    model_tag: str | None,
) -> list[curriculum.PredictionRecord]:
    chosen = [r for r in records if r.epoch == epoch]
    if model_tag is not None:
        chosen = [r for r in chosen if r.model_tag == model_tag]
    tags = {r.model_tag for r in chosen}
    if len(tags) > 1:
        raise ValidationError(f"predictions for epoch {epoch} mix model tags {sorted(tags)}; pass --model-tag")
    if not chosen:
        raise ValidationError(f"predictions.jsonl has no records for epoch {epoch}")
    return chosen


def run_evaluate(
    paths: RunPaths,
    epoch: int | None = None,
    model_tag: str | None = None,
    anls_threshold: float = metrics.ANLS_THRESHOLD,
    metric_overrides: dict | None = None,
) -> dict:
    """Score test-split predictions and write report.json."""
    config = load_config(paths)
    records = load_predictions(paths)
    samples = load_samples(paths)
    documents = load_documents(paths)
    doc_tags = {d.doc_id: d.dataset_tag for d in documents}

    if epoch is None:
        epoch = max((r.epoch for r in records), default=0)
    chosen = _select_predictions(records, epoch, model_tag)
    tag = chosen[0].model_tag

    test_samples = [s for s in samples if s.split == "test"]
    if not test_samples:
        raise ValidationError("corpus has no test-split samples to evaluate")
    report = metrics.evaluate(
        chosen, test_samples, doc_tags, anls_threshold=anls_threshold, metric_overrides=metric_overrides
    )
    payload = report.to_json()
    payload.update(
        {"epoch": epoch, "model_tag": tag, "anls_threshold": anls_threshold, "config_hash": config.config_hash}
    )
    write_json(paths.report, payload)
    return payload


def run_report(paths: RunPaths) -> dict:
    """Collect metrics and curriculum statistics; refuse mixed config hashes."""
    config = load_config(paths)
    hashes = {("config.json", config.config_hash)}

    def collect(path: Path, key: str):
        obj = read_json(path)
        if "config_hash" in obj:
            hashes.add((key, obj["config_hash"]))
        return obj

    if paths.split.exists():
        collect(paths.split, "split.json")
    for artifact in (paths.documents, paths.samples, paths.verbalized, paths.prompts, paths.labels, paths.similarities):
        meta = paths.meta(artifact)
        if meta.exists():
            collect(meta, meta.name)
    epochs = []
    if paths.epochs_dir.is_dir():
        for manifest_path in sorted(paths.epochs_dir.glob("epoch_*.manifest.json")):
            epochs.append(collect(manifest_path, manifest_path.name))
        if paths.eval_this.exists():
            collect(paths.eval_this, "eval_this.json")
    report = collect(require_file(paths.report, "evaluate"), "report.json")

    distinct = {h for _, h in hashes}
    if len(distinct) > 1:
        offenders = ", ".join(f"{name}={h[:12]}" for name, h in sorted(hashes))
        raise ValidationError(f"run dir mixes artifacts from different configurations: {offenders}")

    epochs.sort(key=lambda m: m["epoch"])
    return {"report": report, "epochs": epochs, "config_hash": config.config_hash}
