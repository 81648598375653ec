"""Layout-preserving rendering of OCR token geometry into plain text.

Pages are rendered onto a character grid: tokens cluster into lines by
vertical center, each line places its tokens at columns derived from x0,
and large vertical gaps become (at most one) blank line. The result reads
like the page, so a text-only model can pick up spatial cues such as table
columns and key/value alignment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from statistics import median
from typing import Sequence

from .errors import ValidationError
from .ingest import Document, DocumentPage, OcrToken

# Grid columns are bounded so a malformed bbox cannot blow up memory:
# char_width is floored at page_width / MAX_GRID_COLUMNS.
MAX_GRID_COLUMNS = 20000
_EPSILON = 1e-6

DEFAULT_PAGE_SEPARATOR = "\n=== page {n} ===\n"
_PAGE_SEPARATOR_RE = re.compile(r"\n=== page \d+ ===\n")


@dataclass(frozen=True)
class GridParams:
    """Character-grid geometry for one page."""

    char_width: float
    line_height: float
    line_cluster_tolerance: float = 0.5
    blank_line_gap_ratio: float = 1.5

    def __post_init__(self):
        for name in ("char_width", "line_height", "line_cluster_tolerance", "blank_line_gap_ratio"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"GridParams.{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class VerbalizedDocument:
    doc_id: str
    text: str
    page_texts: tuple[str, ...]
    token_count_estimate: int

    def to_row(self) -> dict:
        return {"doc_id": self.doc_id, "text": self.text, "token_count_estimate": self.token_count_estimate}

    @classmethod
    def from_row(cls, row: dict) -> "VerbalizedDocument":
        try:
            doc_id = str(row["doc_id"])
            text = str(row["text"])
            estimate = int(row["token_count_estimate"])
        except KeyError as exc:
            raise ValidationError(f"verbalized record missing field {exc}") from exc
        # page_texts can only be recovered for the default separator
        pages = tuple(_PAGE_SEPARATOR_RE.split(text))
        return cls(doc_id=doc_id, text=text, page_texts=pages, token_count_estimate=estimate)


def estimate_grid(page: DocumentPage) -> GridParams:
    """Estimate grid geometry from token statistics.

    char_width is the median bbox-width per character, line_height the
    median bbox height. Both are floored at a small positive epsilon, and
    char_width additionally at page_width / MAX_GRID_COLUMNS so degenerate
    boxes cannot produce an unbounded grid.
    """
    if not page.tokens:
        raise ValidationError("cannot estimate grid parameters for a page with no tokens")
    widths = [t.bbox.width / len(t.text) for t in page.tokens]
    heights = [t.bbox.height for t in page.tokens]
    char_width = max(_EPSILON, page.width / MAX_GRID_COLUMNS, median(widths))
    line_height = max(_EPSILON, median(heights))
    return GridParams(char_width=char_width, line_height=line_height)


def cluster_lines(tokens: Sequence[OcrToken], params: GridParams) -> list[list[OcrToken]]:
    """Group tokens into visual lines.

    A sweep over tokens in ascending vertical-center order joins a token to
    the current line while its center stays within tolerance * line_height
    of the line's running mean center; otherwise it starts a new line.
    Within a line tokens sort by x0 (ties keep input order); lines are
    ordered by mean center.
    """
    if not tokens:
        return []
    order = sorted(range(len(tokens)), key=lambda i: tokens[i].bbox.y_center)
    threshold = params.line_cluster_tolerance * params.line_height

    lines: list[list[int]] = []
    center_sums: list[float] = []
    for i in order:
        center = tokens[i].bbox.y_center
        if lines and center - center_sums[-1] / len(lines[-1]) <= threshold:
            lines[-1].append(i)
            center_sums[-1] += center
        else:
            lines.append([i])
            center_sums.append(center)

    keyed = sorted(
        zip(lines, center_sums),
        key=lambda pair: pair[1] / len(pair[0]),
    )
    result = []
    for line, _ in keyed:
        ordered = sorted(line, key=lambda i: (tokens[i].bbox.x0, i))
        result.append([tokens[i] for i in ordered])
    return result


def _column(x0: float, char_width: float) -> int:
    # round half up, clamped to the grid
    return max(0, int(math.floor(x0 / char_width + 0.5)))


def render_spatial(page: DocumentPage, params: GridParams) -> str:
    """Render one page onto the character grid. Empty pages render as ''."""
    if not page.tokens:
        return ""
    lines = cluster_lines(list(page.tokens), params)

    out: list[str] = []
    prev_bottom: float | None = None
    gap_limit = params.blank_line_gap_ratio * params.line_height
    for line in lines:
        top = min(t.bbox.y0 for t in line)
        bottom = max(t.bbox.y1 for t in line)
        if prev_bottom is not None and top - prev_bottom > gap_limit:
            out.append("")
        prev_bottom = max(bottom, prev_bottom) if prev_bottom is not None else bottom

        parts: list[str] = []
        length = 0
        for token in line:
            target = _column(token.bbox.x0, params.char_width)
            # shift right on collision; placed tokens keep >= 1 space gap
            column = target if length == 0 and not parts else max(target, length + 1)
            parts.append(" " * (column - length))
            parts.append(token.text)
            length = column + len(token.text)
        out.append("".join(parts).rstrip())
    return "\n".join(out)


def verbalize(
    document: Document,
    params: GridParams | Sequence[GridParams] | None = None,
    page_separator: str = DEFAULT_PAGE_SEPARATOR,
) -> VerbalizedDocument:
    """Render all pages of a document into one text.

    ``params`` may be a single GridParams applied to every page, one per
    page, or None to estimate per page. Pages after the first are preceded
    by the separator with {n} set to the 1-based page number. The token
    count estimate is len(text) / 4 rounded.
    """
    if isinstance(params, GridParams):
        per_page: list[GridParams | None] = [params] * len(document.pages)
    elif params is None:
        per_page = [None] * len(document.pages)
    else:
        per_page = list(params)
        if len(per_page) != len(document.pages):
            raise ValidationError(
                f"got {len(per_page)} GridParams for {len(document.pages)} pages of {document.doc_id!r}"
            )

    page_texts = []
    for page, page_params in zip(document.pages, per_page):
        if not page.tokens:
            page_texts.append("")
            continue
        if page_params is None:
            page_params = estimate_grid(page)
        page_texts.append(render_spatial(page, page_params))

    pieces = [page_texts[0]] if page_texts else []
    for n, text in enumerate(page_texts[1:], start=2):
        pieces.append(page_separator.format(n=n))
        pieces.append(text)
    text = "".join(pieces)
    return VerbalizedDocument(
        doc_id=document.doc_id,
        text=text,
        page_texts=tuple(page_texts),
        token_count_estimate=round(len(text) / 4),
    )
