"""Scoring: ANLS, exact accuracy, and type-aware key extraction accuracy.

Datasets route to their measure by tag: document and infographic QA use
ANLS, table QA and table NLI use exact accuracy, receipt extraction uses
the type-aware measure (dates compared as calendar dates, totals as
decimals after currency stripping, names/addresses case- and
whitespace-insensitively). Web-page QA has no measure here and must be
excluded or explicitly overridden. Grouped predictions are un-grouped by
their numbered JSON keys before scoring; a prediction that is not valid
JSON is scored raw against the first question only.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from statistics import mean
from typing import Iterable, Mapping, Sequence

from .curriculum import PredictionRecord, levenshtein
from .errors import ValidationError
from .ingest import SROIE_KEYS, TaskSample

ANLS_THRESHOLD = 0.5

METRIC_BY_TAG = {
    "DocVQA": "anls",
    "InfographicsVQA": "anls",
    "WikiTableQuestions": "accuracy",
    "TabFact": "accuracy",
    "SROIE": "sroie_type_aware",
}

# synthetic corpora carry no benchmark tag; route by task kind instead
METRIC_BY_TASK_KIND = {
    "VQA": "anls",
    "TableQA": "accuracy",
    "TableNLI": "accuracy",
    "KIE": "sroie_type_aware",
    "SRC": "anls",
}

DATE_FORMATS = (
    "%Y-%m-%d",
    "%d/%m/%Y",
    "%d-%m-%Y",
    "%d.%m.%Y",
    "%d/%m/%y",
    "%d %b %Y",
    "%d %B %Y",
)

_CURRENCY_WORD_RE = re.compile(r"(?i)\b(rm|myr|usd|eur|gbp)\b")
_CURRENCY_CHAR_RE = re.compile(r"[$€£,\s]")


@dataclass(frozen=True)
class EvalReport:
    per_dataset: dict
    average: float

    def to_json(self) -> dict:
        return {"per_dataset": {k: dict(v) for k, v in sorted(self.per_dataset.items())}, "average": self.average}

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        try:
            return cls(per_dataset=dict(obj["per_dataset"]), average=float(obj["average"]))
        except KeyError as exc:
            raise ValidationError(f"eval report missing field {exc}") from exc


# --------------------------------------------------------------------------
# Single-answer measures
# --------------------------------------------------------------------------

def anls(prediction: str, golds: Sequence[str], threshold: float = ANLS_THRESHOLD) -> float:
    """Normalized Levenshtein similarity, best over the gold answers.

    Per gold: NL = lev(lower(pred), lower(gold)) / max length; the score is
    1 - NL when NL is below the threshold and 0 otherwise.
    """
    if not golds:
        raise ValidationError("anls needs at least one gold answer")
    pred = prediction.strip().lower()
    best = 0.0
    for gold in golds:
        g = gold.strip().lower()
        longest = max(len(pred), len(g))
        if longest == 0:
            best = max(best, 1.0)
            continue
        nl = levenshtein(pred, g) / longest
        if nl < threshold:
            best = max(best, 1.0 - nl)
    return best


def _decimal_or_none(text: str) -> Decimal | None:
    cleaned = text.strip().replace(",", "")
    if not cleaned:
        return None
    try:
        value = Decimal(cleaned)
    except (InvalidOperation, ValueError):
        return None
    if value.is_nan() or value.is_infinite():
        return None
    return value


def exact_accuracy(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold.

    Normalization is casefold + trim; strings that parse as numbers (after
    comma removal) are compared as decimals, so "2,050" matches "2050".
    """
    if not golds:
        raise ValidationError("exact_accuracy needs at least one gold answer")
    pred_text = prediction.strip().casefold()
    pred_num = _decimal_or_none(prediction)
    for gold in golds:
        if pred_text == gold.strip().casefold():
            return 1
        gold_num = _decimal_or_none(gold)
        if pred_num is not None and gold_num is not None and pred_num == gold_num:
            return 1
    return 0


def _norm_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def _parse_date(text: str) -> date | None:
    cleaned = " ".join(text.split())
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(cleaned, fmt).date()
        except ValueError:
            continue
    return None


def _parse_amount(text: str) -> Decimal | None:
    cleaned = _CURRENCY_WORD_RE.sub("", text)
    cleaned = _CURRENCY_CHAR_RE.sub("", cleaned)
    if not cleaned:
        return None
    try:
        value = Decimal(cleaned)
    except (InvalidOperation, ValueError):
        return None
    if value.is_nan() or value.is_infinite():
        return None
    return value


def _values_match(key: str, predicted: str, gold: str) -> bool:
    if key == "date":
        a, b = _parse_date(predicted), _parse_date(gold)
        if a is not None and b is not None:
            return a == b
    elif key == "total":
        a, b = _parse_amount(predicted), _parse_amount(gold)
        if a is not None and b is not None:
            return a == b
    return _norm_text(predicted) == _norm_text(gold)


def _coerce_str(value) -> str:
    return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


def sroie_type_aware(pred_json: str, gold: Mapping[str, str]) -> float:
    """Fraction of receipt fields matched under per-type normalization."""
    if not gold:
        raise ValidationError("sroie_type_aware needs at least one gold key")
    unknown = set(gold) - set(SROIE_KEYS)
    if unknown:
        raise ValidationError(f"unknown receipt keys: {sorted(unknown)}")
    try:
        parsed = json.loads(pred_json)
    except json.JSONDecodeError:
        return 0.0
    if not isinstance(parsed, dict):
        return 0.0
    matched = sum(
        1 for key, value in gold.items() if _values_match(key, _coerce_str(parsed.get(key, "")), value)
    )
    return matched / len(gold)


# --------------------------------------------------------------------------
# Report assembly
# --------------------------------------------------------------------------

def ungroup_answers(output_text: str, n_questions: int) -> tuple[list[str], bool]:
    """Split one prediction into per-question answers via its numbered keys.

    Returns (answers, parsed_ok). When the text is not a JSON object the
    raw string stands in for the first question and the rest are empty.
    """
    try:
        parsed = json.loads(output_text)
    except json.JSONDecodeError:
        parsed = None
    if not isinstance(parsed, dict):
        return [output_text] + [""] * (n_questions - 1), False
    return [_coerce_str(parsed.get(str(i), "")) for i in range(1, n_questions + 1)], True


def _resolve_metric(tag: str, task_kind: str, overrides: Mapping[str, str] | None) -> str:
    if overrides and tag in overrides:
        metric = overrides[tag]
    elif tag == "synthetic":
        metric = METRIC_BY_TASK_KIND[task_kind]
    else:
        metric = METRIC_BY_TAG.get(tag)
    if metric is None:
        raise ValidationError(
            f"no metric is defined for dataset {tag!r}; exclude it or pass a metric override"
        )
    if metric not in ("anls", "accuracy", "sroie_type_aware"):
        raise ValidationError(f"unknown metric {metric!r} for dataset {tag!r}")
    return metric


def _question_scores(sample: TaskSample, output_text: str | None, metric: str, threshold: float) -> list[float]:
    if metric == "sroie_type_aware":
        if output_text is None:
            return [0.0]
        return [sroie_type_aware(output_text, sample.gold_answers)]
    if output_text is None:
        return [0.0] * len(sample.questions)
    answers, _ = ungroup_answers(output_text, len(sample.questions))
    scores = []
    for question, answer in zip(sample.questions, answers):
        golds = sample.gold_answers[question]
        if metric == "anls":
            scores.append(anls(answer, golds, threshold))
        else:
            scores.append(float(exact_accuracy(answer, golds)))
    return scores


def evaluate(
    predictions: Iterable[PredictionRecord],
    samples: Sequence[TaskSample],
    doc_tags: Mapping[str, str],
    anls_threshold: float = ANLS_THRESHOLD,
    metric_overrides: Mapping[str, str] | None = None,
) -> EvalReport:
    """Score predictions per dataset and average the per-dataset values.

    Report rows are keyed by dataset tag ("synthetic" rows split per task
    kind so each row has one metric). Row values are the mean over
    questions (over samples for key extraction); samples with no
    prediction score zero.
    """
    by_id: dict[str, PredictionRecord] = {}
    for record in predictions:
        if record.sample_id in by_id:
            raise ValidationError(f"duplicate prediction for sample {record.sample_id!r}")
        by_id[record.sample_id] = record

    scores_by_row: dict[str, list[float]] = {}
    metric_by_row: dict[str, str] = {}
    samples_by_row: dict[str, int] = {}
    for sample in samples:
        if sample.doc_id not in doc_tags:
            raise ValidationError(f"sample {sample.sample_id!r} references unknown document {sample.doc_id!r}")
        tag = doc_tags[sample.doc_id]
        metric = _resolve_metric(tag, sample.task_kind, metric_overrides)
        row = f"synthetic/{sample.task_kind}" if tag == "synthetic" else tag
        record = by_id.get(sample.sample_id)
        output_text = record.output_text if record is not None else None
        scores = _question_scores(sample, output_text, metric, anls_threshold)
        scores_by_row.setdefault(row, []).extend(scores)
        metric_by_row[row] = metric
        samples_by_row[row] = samples_by_row.get(row, 0) + 1

    if not scores_by_row:
        raise ValidationError("no samples to evaluate")
    per_dataset = {
        row: {
            "metric_name": metric_by_row[row],
            "value": mean(scores),
            "n_samples": samples_by_row[row],
        }
        for row, scores in scores_by_row.items()
    }
    average = mean(entry["value"] for entry in per_dataset.values())
    return EvalReport(per_dataset=per_dataset, average=average)
