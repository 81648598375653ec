"""Prompt assembly: verbalized document + task instructions + JSON clause.

Templates are data files (templates/*.json inside the package) so the
wording can be swapped without code changes. A template's instruction text
carries {document} plus {questions} (question tasks) or {keys} (key
extraction); the JSON-output clause is appended after the filled
instructions and fixes the expected answer shape to a flat JSON object
keyed by question number or field name.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ValidationError
from .ingest import TASK_KINDS, TaskSample
from .verbalizer import VerbalizedDocument

DOC_BEGIN = "<<<BEGIN DOCUMENT>>>"
DOC_END = "<<<END DOCUMENT>>>"

_KNOWN_PLACEHOLDERS = ("document", "questions", "keys")
_FILL_RE = re.compile(r"\{(document|questions|keys)\}")
_ANY_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    task_kind: str
    instruction_text: str
    json_output_clause: str

    def __post_init__(self):
        if not self.template_id:
            raise ValidationError("template_id is empty")
        if self.task_kind not in TASK_KINDS:
            raise ValidationError(f"template {self.template_id!r}: unknown task_kind {self.task_kind!r}")
        names = set(_ANY_PLACEHOLDER_RE.findall(self.instruction_text))
        unknown = names - set(_KNOWN_PLACEHOLDERS)
        if unknown:
            raise ValidationError(
                f"template {self.template_id!r}: unfillable placeholders {sorted(unknown)}"
            )
        if "document" not in names:
            raise ValidationError(f"template {self.template_id!r}: missing {{document}} placeholder")
        wanted = "keys" if self.task_kind == "KIE" else "questions"
        if wanted not in names:
            raise ValidationError(
                f"template {self.template_id!r}: {self.task_kind} template needs {{{wanted}}}"
            )
        if _ANY_PLACEHOLDER_RE.search(self.json_output_clause):
            raise ValidationError(
                f"template {self.template_id!r}: json_output_clause must not contain placeholders"
            )
        if not self.json_output_clause.strip():
            raise ValidationError(f"template {self.template_id!r}: json_output_clause is empty")

    @classmethod
    def from_json(cls, obj: dict) -> "PromptTemplate":
        try:
            return cls(
                template_id=str(obj["template_id"]),
                task_kind=str(obj["task_kind"]),
                instruction_text=str(obj["instruction_text"]),
                json_output_clause=str(obj["json_output_clause"]),
            )
        except KeyError as exc:
            raise ValidationError(f"template record missing field {exc}") from exc


@dataclass(frozen=True)
class PromptRecord:
    sample_id: str
    prompt_text: str
    template_id: str
    token_count_estimate: int

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "prompt_text": self.prompt_text,
            "template_id": self.template_id,
            "token_count_estimate": self.token_count_estimate,
        }

    @classmethod
    def from_row(cls, row: dict) -> "PromptRecord":
        try:
            return cls(
                sample_id=str(row["sample_id"]),
                prompt_text=str(row["prompt_text"]),
                template_id=str(row["template_id"]),
                token_count_estimate=int(row["token_count_estimate"]),
            )
        except KeyError as exc:
            raise ValidationError(f"prompt record missing field {exc}") from exc


def _fill(template_text: str, values: dict) -> str:
    # split-and-join is a single pass, so substituted content (which may
    # contain braces) is never rescanned for placeholders
    parts = _FILL_RE.split(template_text)
    for i in range(1, len(parts), 2):
        parts[i] = values[parts[i]]
    return "".join(parts)


def render_questions(questions) -> str:
    return "\n".join(f"{n}. {q}" for n, q in enumerate(questions, start=1))


def render_keys(keys) -> str:
    return ", ".join(f'"{k}"' for k in keys)


def build_prompt(sample: TaskSample, verbalized: VerbalizedDocument, template: PromptTemplate) -> PromptRecord:
    """Fill a template for one sample. Pure and deterministic."""
    if template.task_kind != sample.task_kind:
        raise ValidationError(
            f"template {template.template_id!r} is for {template.task_kind}, "
            f"sample {sample.sample_id!r} is {sample.task_kind}"
        )
    if verbalized.doc_id != sample.doc_id:
        raise ValidationError(
            f"sample {sample.sample_id!r} references document {sample.doc_id!r}, "
            f"got verbalization of {verbalized.doc_id!r}"
        )
    document_block = f"{DOC_BEGIN}\n{verbalized.text}\n{DOC_END}"
    values = {"document": document_block}
    if sample.task_kind == "KIE":
        values["keys"] = render_keys(sample.questions)
    else:
        values["questions"] = render_questions(sample.questions)
    filled = _fill(template.instruction_text, values)
    prompt_text = f"{filled.rstrip()}\n\n{template.json_output_clause}"
    return PromptRecord(
        sample_id=sample.sample_id,
        prompt_text=prompt_text,
        template_id=template.template_id,
        token_count_estimate=round(len(prompt_text) / 4),
    )


def extract_document(prompt_text: str) -> str:
    """Recover the verbalized document from a prompt via its delimiters."""
    begin = prompt_text.find(DOC_BEGIN)
    end = prompt_text.rfind(DOC_END)
    if begin < 0 or end < 0 or end < begin:
        raise ValidationError("prompt text has no document delimiters")
    start = begin + len(DOC_BEGIN) + 1  # skip the newline after the marker
    return prompt_text[start : end - 1]


def load_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot load template {path}: {exc}") from exc
    return PromptTemplate.from_json(obj)


def load_builtin_templates() -> dict[str, PromptTemplate]:
    """Built-in templates shipped with the package, keyed by task kind."""
    templates = {}
    root = resources.files("distillforge").joinpath("templates")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".json"):
            continue
        template = PromptTemplate.from_json(json.loads(entry.read_text(encoding="utf-8")))
        if template.task_kind in templates:
            raise ValidationError(f"duplicate built-in template for {template.task_kind}")
        templates[template.task_kind] = template
    missing = [k for k in TASK_KINDS if k not in templates]
    if missing:
        raise ValidationError(f"missing built-in templates for {missing}")
    return templates
