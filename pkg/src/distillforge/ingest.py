"""Corpus loading, deterministic splits, and question grouping.

Documents arrive as OCR token geometry (one bounding box per word) plus
task samples that reference them. Everything is normalized into two JSONL
files defined by this package:

    documents.jsonl  {doc_id, dataset_tag, pages:[{width, height,
                      tokens:[{text, x0, y0, x1, y1}]}]}
    samples.jsonl    {sample_id, doc_id, task_kind, questions:[...],
                      gold:{...}, split}

For question answering tasks ``gold`` maps each question to a list of
acceptable answers; for key information extraction it maps each key to a
single value string. A "due-style" adapter normalizes benchmark exports
that ship document annotations and OCR content as separate JSONL files.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .jsonl import read_jsonl

DATASET_TAGS = (
    "DocVQA",
    "InfographicsVQA",
    "WikiTableQuestions",
    "TabFact",
    "SROIE",
    "WebSRC",
    "synthetic",
)

TASK_KINDS = ("VQA", "TableQA", "TableNLI", "KIE", "SRC")

SPLITS = ("train", "test")

# Published per-dataset (train, test) sample counts; fixture loaders are
# validated against these totals (57202 train, 4329 test).
EXPECTED_BASE_COUNTS = {
    "DocVQA": (10194, 1287),
    "InfographicsVQA": (4406, 579),
    "WikiTableQuestions": (1350, 421),
    "TabFact": (13182, 1695),
    "SROIE": (626, 347),
    "WebSRC": (27444, 0),
}

SROIE_KEYS = ("company", "date", "address", "total")


def _require(condition: bool, message: str):
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class BoundingBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            value = getattr(self, name)
            _require(isinstance(value, (int, float)) and math.isfinite(value), f"bbox {name} must be finite")
        _require(self.x0 <= self.x1, f"bbox has x0 > x1 ({self.x0} > {self.x1})")
        _require(self.y0 <= self.y1, f"bbox has y0 > y1 ({self.y0} > {self.y1})")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def y_center(self) -> float:
        return (self.y0 + self.y1) / 2.0

    def clamped(self, width: float, height: float) -> "BoundingBox":
        def clip(v, hi):
            return min(max(v, 0.0), hi)

        return BoundingBox(clip(self.x0, width), clip(self.y0, height), clip(self.x1, width), clip(self.y1, height))


@dataclass(frozen=True)
class OcrToken:
    text: str
    bbox: BoundingBox
    page_index: int = 0

    def __post_init__(self):
        _require(bool(self.text.strip()), "token text is empty")
        _require("\n" not in self.text, f"token text contains a newline: {self.text!r}")
        _require(self.page_index >= 0, "page_index must be non-negative")


@dataclass(frozen=True)
class DocumentPage:
    width: float
    height: float
    tokens: tuple[OcrToken, ...] = ()

    def __post_init__(self):
        _require(self.width > 0 and math.isfinite(self.width), f"page width must be positive, got {self.width}")
        _require(self.height > 0 and math.isfinite(self.height), f"page height must be positive, got {self.height}")
        clamped = tuple(
            OcrToken(t.text, t.bbox.clamped(self.width, self.height), t.page_index) for t in self.tokens
        )
        object.__setattr__(self, "tokens", clamped)


@dataclass(frozen=True)
class Document:
    doc_id: str
    dataset_tag: str
    pages: tuple[DocumentPage, ...]

    def __post_init__(self):
        _require(bool(self.doc_id), "doc_id is empty")
        _require(self.dataset_tag in DATASET_TAGS, f"unknown dataset_tag: {self.dataset_tag!r}")
        _require(len(self.pages) > 0, f"document {self.doc_id!r} has no pages")


@dataclass(frozen=True)
class TaskSample:
    sample_id: str
    doc_id: str
    task_kind: str
    questions: tuple[str, ...]
    gold_answers: dict
    split: str

    def __post_init__(self):
        _require(bool(self.sample_id), "sample_id is empty")
        _require(self.task_kind in TASK_KINDS, f"unknown task_kind: {self.task_kind!r}")
        _require(self.split in SPLITS, f"unknown split: {self.split!r}")
        _require(len(self.questions) > 0, f"sample {self.sample_id!r} has no questions")
        missing = [q for q in self.questions if q not in self.gold_answers]
        _require(not missing, f"sample {self.sample_id!r} lacks gold answers for {missing[:3]}")
        for question, answer in self.gold_answers.items():
            if self.task_kind == "KIE":
                _require(
                    isinstance(answer, str),
                    f"sample {self.sample_id!r}: KIE gold values must be strings",
                )
            else:
                _require(
                    isinstance(answer, list) and answer and all(isinstance(a, str) for a in answer),
                    f"sample {self.sample_id!r}: gold for {question!r} must be a non-empty list of strings",
                )


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    pool_size: int
    train_count: int
    eval_count: int
    member_ids: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "pool_size": self.pool_size,
            "train_count": self.train_count,
            "eval_count": self.eval_count,
            "member_ids": {"train": list(self.member_ids["train"]), "eval": list(self.member_ids["eval"])},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitManifest":
        try:
            return cls(
                seed=int(obj["seed"]),
                pool_size=int(obj["pool_size"]),
                train_count=int(obj["train_count"]),
                eval_count=int(obj["eval_count"]),
                member_ids={"train": list(obj["member_ids"]["train"]), "eval": list(obj["member_ids"]["eval"])},
            )
        except KeyError as exc:
            raise ValidationError(f"split manifest missing field {exc}") from exc


# --------------------------------------------------------------------------
# JSONL (de)serialization
# --------------------------------------------------------------------------

def document_to_row(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "dataset_tag": doc.dataset_tag,
        "pages": [
            {
                "width": page.width,
                "height": page.height,
                "tokens": [
                    {"text": t.text, "x0": t.bbox.x0, "y0": t.bbox.y0, "x1": t.bbox.x1, "y1": t.bbox.y1}
                    for t in page.tokens
                ],
            }
            for page in doc.pages
        ],
    }


def document_from_row(row: dict) -> Document:
    try:
        pages = []
        for page_index, page in enumerate(row["pages"]):
            tokens = tuple(
                OcrToken(
                    text=str(tok["text"]),
                    bbox=BoundingBox(float(tok["x0"]), float(tok["y0"]), float(tok["x1"]), float(tok["y1"])),
                    page_index=page_index,
                )
                for tok in page["tokens"]
            )
            pages.append(DocumentPage(width=float(page["width"]), height=float(page["height"]), tokens=tokens))
        return Document(doc_id=str(row["doc_id"]), dataset_tag=str(row["dataset_tag"]), pages=tuple(pages))
    except KeyError as exc:
        raise ValidationError(f"document record missing field {exc}") from exc


def sample_to_row(sample: TaskSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "doc_id": sample.doc_id,
        "task_kind": sample.task_kind,
        "questions": list(sample.questions),
        "gold": dict(sample.gold_answers),
        "split": sample.split,
    }


def sample_from_row(row: dict) -> TaskSample:
    try:
        return TaskSample(
            sample_id=str(row["sample_id"]),
            doc_id=str(row["doc_id"]),
            task_kind=str(row["task_kind"]),
            questions=tuple(str(q) for q in row["questions"]),
            gold_answers=dict(row["gold"]),
            split=str(row["split"]),
        )
    except KeyError as exc:
        raise ValidationError(f"sample record missing field {exc}") from exc


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

def load_corpus(
    path: str | Path,
    format: str = "native-jsonl",
    dataset_tag: str | None = None,
    task_kind: str | None = None,
) -> tuple[list[Document], list[TaskSample]]:
    """Load a corpus directory and check referential integrity.

    ``native-jsonl`` expects documents.jsonl and samples.jsonl in ``path``.
    ``due-style`` expects document.jsonl (annotations) plus
    documents_content.jsonl (OCR) and needs dataset_tag/task_kind hints.
    """
    path = Path(path)
    _require(path.exists(), f"corpus path does not exist: {path}")
    if format == "native-jsonl":
        documents, samples = _load_native(path)
    elif format == "due-style":
        _require(
            dataset_tag is not None and task_kind is not None,
            "due-style loading needs dataset_tag and task_kind",
        )
        documents, samples = _load_due_style(path, dataset_tag, task_kind)
    else:
        raise ValidationError(f"unknown corpus format: {format!r}")

    doc_ids = set()
    for doc in documents:
        _require(doc.doc_id not in doc_ids, f"duplicate doc_id: {doc.doc_id!r}")
        doc_ids.add(doc.doc_id)
    sample_ids = set()
    dangling = []
    for sample in samples:
        _require(sample.sample_id not in sample_ids, f"duplicate sample_id: {sample.sample_id!r}")
        sample_ids.add(sample.sample_id)
        if sample.doc_id not in doc_ids:
            dangling.append(sample.sample_id)
    if dangling:
        shown = ", ".join(dangling[:10])
        more = "" if len(dangling) <= 10 else f" (+{len(dangling) - 10} more)"
        raise ValidationError(f"samples reference missing documents: {shown}{more}")
    return documents, samples


def _load_native(path: Path) -> tuple[list[Document], list[TaskSample]]:
    docs_file = path / "documents.jsonl"
    samples_file = path / "samples.jsonl"
    _require(docs_file.exists(), f"missing {docs_file}")
    _require(samples_file.exists(), f"missing {samples_file}")
    documents = []
    for lineno, row in read_jsonl(docs_file):
        try:
            documents.append(document_from_row(row))
        except ValidationError as exc:
            raise ValidationError(f"{docs_file}:{lineno}: {exc}") from exc
    samples = []
    for lineno, row in read_jsonl(samples_file):
        try:
            samples.append(sample_from_row(row))
        except ValidationError as exc:
            raise ValidationError(f"{samples_file}:{lineno}: {exc}") from exc
    return documents, samples


def _load_due_style(path: Path, dataset_tag: str, task_kind: str) -> tuple[list[Document], list[TaskSample]]:
    """Adapter for benchmark exports that keep annotations and OCR apart.

    document.jsonl lines carry {name, split, annotations:[{key,
    values:[{value, value_variants?}]}]}; documents_content.jsonl lines
    carry {name, contents:[{common_format:{tokens, positions,
    structures:{pages:{positions, structure_value}}}}]}. The "dev" split
    folds into train. One task sample is emitted per annotation.
    """
    ann_file = path / "document.jsonl"
    content_file = path / "documents_content.jsonl"
    _require(ann_file.exists(), f"missing {ann_file}")
    _require(content_file.exists(), f"missing {content_file}")

    documents = []
    for lineno, row in read_jsonl(content_file):
        try:
            documents.append(_due_document(row, dataset_tag))
        except (ValidationError, KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"{content_file}:{lineno}: bad content record: {exc}") from exc

    samples = []
    for lineno, row in read_jsonl(ann_file):
        try:
            samples.extend(_due_samples(row, task_kind))
        except (ValidationError, KeyError, TypeError) as exc:
            raise ValidationError(f"{ann_file}:{lineno}: bad annotation record: {exc}") from exc
    return documents, samples


def _due_document(row: dict, dataset_tag: str) -> Document:
    name = str(row["name"])
    content = row["contents"][0]
    common = content["common_format"]
    texts = [str(t) for t in common["tokens"]]
    positions = [tuple(float(v) for v in pos) for pos in common["positions"]]
    _require(len(texts) == len(positions), "tokens and positions length mismatch")

    structures = common.get("structures") or {}
    pages_struct = structures.get("pages") or {}
    page_boxes = pages_struct.get("positions")
    page_ranges = pages_struct.get("structure_value")
    if not page_boxes or not page_ranges:
        # single implicit page sized to the token extent
        max_x = max((p[2] for p in positions), default=1.0)
        max_y = max((p[3] for p in positions), default=1.0)
        page_boxes = [[0.0, 0.0, max(max_x, 1.0), max(max_y, 1.0)]]
        page_ranges = [[0, len(texts)]]

    pages = []
    for page_index, (box, span) in enumerate(zip(page_boxes, page_ranges)):
        width = float(box[2]) - float(box[0])
        height = float(box[3]) - float(box[1])
        start, end = int(span[0]), int(span[1])
        tokens = tuple(
            OcrToken(text=texts[i], bbox=BoundingBox(*positions[i]), page_index=page_index)
            for i in range(start, end)
            if texts[i].strip()
        )
        pages.append(DocumentPage(width=max(width, 1.0), height=max(height, 1.0), tokens=tokens))
    return Document(doc_id=name, dataset_tag=dataset_tag, pages=tuple(pages))


def _due_samples(row: dict, task_kind: str) -> list[TaskSample]:
    name = str(row["name"])
    split = str(row.get("split", "train"))
    if split == "dev":
        split = "train"
    _require(split in SPLITS, f"unknown split {split!r} for document {name!r}")
    if task_kind == "KIE":
        gold = {}
        for ann in row["annotations"]:
            key = str(ann["key"])
            values = ann.get("values") or []
            gold[key] = str(values[0]["value"]) if values else ""
        sample = TaskSample(
            sample_id=f"{name}:kie",
            doc_id=name,
            task_kind="KIE",
            questions=tuple(gold.keys()),
            gold_answers=gold,
            split=split,
        )
        return [sample]
    samples = []
    for index, ann in enumerate(row["annotations"]):
        question = str(ann["key"])
        answers = []
        for value in ann.get("values") or []:
            answers.append(str(value["value"]))
            answers.extend(str(v) for v in value.get("value_variants") or [])
        _require(bool(answers), f"annotation {question!r} on {name!r} has no values")
        samples.append(
            TaskSample(
                sample_id=f"{name}:{index}",
                doc_id=name,
                task_kind=task_kind,
                questions=(question,),
                gold_answers={question: answers},
                split=split,
            )
        )
    return samples


def corpus_counts(documents: Sequence[Document], samples: Sequence[TaskSample]) -> dict:
    """Per-dataset sample counts, keyed dataset_tag -> {split: n}."""
    tag_by_doc = {doc.doc_id: doc.dataset_tag for doc in documents}
    counts: dict[str, dict[str, int]] = {}
    for sample in samples:
        tag = tag_by_doc[sample.doc_id]
        per_tag = counts.setdefault(tag, {split: 0 for split in SPLITS})
        per_tag[sample.split] += 1
    return counts


# --------------------------------------------------------------------------
# Splitting and grouping
# --------------------------------------------------------------------------

def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed for a named use of the run seed (platform independent)."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_split(
    pool: Iterable[str],
    eval_fraction: float,
    seed: int,
    strata: Mapping[str, str] | None = None,
) -> SplitManifest:
    """Deterministic train/eval split of a sample-id pool.

    The sorted pool is shuffled with a seeded Fisher-Yates pass and the
    first round-half-up(pool * eval_fraction) ids become the eval split.
    With ``strata`` (sample_id -> stratum label) the same rule is applied
    inside each stratum and the parts are concatenated in label order.
    """
    ids = sorted(pool)
    _require(len(ids) > 0, "split pool is empty")
    _require(len(ids) == len(set(ids)), "split pool contains duplicate ids")
    _require(0.0 < eval_fraction < 1.0, f"eval_fraction must be in (0, 1), got {eval_fraction}")

    if strata is not None:
        missing = [i for i in ids if i not in strata]
        _require(not missing, f"strata missing for ids: {missing[:5]}")
        train_ids: list[str] = []
        eval_ids: list[str] = []
        groups: dict[str, list[str]] = {}
        for sample_id in ids:
            groups.setdefault(strata[sample_id], []).append(sample_id)
        for label in sorted(groups):
            part = make_split(groups[label], eval_fraction, derive_seed(seed, label))
            train_ids.extend(part.member_ids["train"])
            eval_ids.extend(part.member_ids["eval"])
        return SplitManifest(
            seed=seed,
            pool_size=len(ids),
            train_count=len(train_ids),
            eval_count=len(eval_ids),
            member_ids={"train": train_ids, "eval": eval_ids},
        )

    eval_count = _round_half_up(len(ids) * eval_fraction)
    _require(eval_count >= 1, f"eval_fraction {eval_fraction} yields no eval samples for pool of {len(ids)}")
    _require(eval_count < len(ids), f"eval_fraction {eval_fraction} leaves no train samples for pool of {len(ids)}")
    rng = random.Random(seed)
    rng.shuffle(ids)
    eval_ids = ids[:eval_count]
    train_ids = ids[eval_count:]
    return SplitManifest(
        seed=seed,
        pool_size=len(eval_ids) + len(train_ids),
        train_count=len(train_ids),
        eval_count=len(eval_ids),
        member_ids={"train": train_ids, "eval": eval_ids},
    )


def group_questions(samples: Sequence[TaskSample], max_group: int = 10) -> list[TaskSample]:
    """Regroup one document's samples into samples of at most ``max_group`` questions.

    Question order is preserved: flattening the outputs' question lists
    reproduces the inputs' question sequence exactly. A single input
    sample that already fits is returned unchanged.
    """
    _require(max_group >= 1, "max_group must be at least 1")
    if not samples:
        return []
    doc_ids = {s.doc_id for s in samples}
    _require(len(doc_ids) == 1, f"group_questions got samples from multiple documents: {sorted(doc_ids)}")
    kinds = {s.task_kind for s in samples}
    _require(len(kinds) == 1, f"group_questions got mixed task kinds: {sorted(kinds)}")
    splits = {s.split for s in samples}
    _require(len(splits) == 1, f"group_questions got mixed splits: {sorted(splits)}")

    if len(samples) == 1 and len(samples[0].questions) <= max_group:
        return [samples[0]]

    doc_id = samples[0].doc_id
    flat: list[tuple[str, object]] = []
    seen_gold: dict[str, object] = {}
    for sample in samples:
        for question in sample.questions:
            gold = sample.gold_answers[question]
            if question in seen_gold and seen_gold[question] != gold:
                raise ValidationError(
                    f"conflicting gold answers for repeated question {question!r} on document {doc_id!r}"
                )
            seen_gold[question] = gold
            flat.append((question, gold))

    grouped = []
    for index in range(0, len(flat), max_group):
        chunk = flat[index : index + max_group]
        grouped.append(
            TaskSample(
                sample_id=f"{doc_id}#g{index // max_group + 1}",
                doc_id=doc_id,
                task_kind=samples[0].task_kind,
                questions=tuple(q for q, _ in chunk),
                gold_answers={q: g for q, g in chunk},
                split=samples[0].split,
            )
        )
    return grouped
