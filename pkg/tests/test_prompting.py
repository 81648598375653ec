import pytest

from distillforge.errors import ValidationError
from distillforge.ingest import TASK_KINDS, TaskSample
from distillforge.prompting import (
    DOC_BEGIN,
    DOC_END,
    PromptRecord,
    PromptTemplate,
    build_prompt,
    extract_document,
    load_builtin_templates,
    load_template,
    render_keys,
    render_questions,
)
from distillforge.verbalizer import VerbalizedDocument


def verbalized(doc_id="d1", text="Invoice\nTotal   42.00"):
    return VerbalizedDocument(doc_id=doc_id, text=text, page_texts=(text,), token_count_estimate=5)


def vqa_sample(questions=("What is the total?",), sample_id="s1", doc_id="d1"):
    return TaskSample(
        sample_id=sample_id,
        doc_id=doc_id,
        task_kind="VQA",
        questions=tuple(questions),
        gold_answers={q: ["42.00"] for q in questions},
        split="train",
    )


@pytest.fixture(scope="module")
def templates():
    return load_builtin_templates()


class TestTemplates:
    def test_builtin_set_covers_all_task_kinds(self, templates):
        assert set(templates) == set(TASK_KINDS)
        for kind, template in templates.items():
            assert template.task_kind == kind

    def test_template_requires_document_placeholder(self):
        with pytest.raises(ValidationError, match="document"):
            PromptTemplate("t", "VQA", "Answer: {questions}", "Return JSON.")

    def test_template_requires_kind_placeholder(self):
        with pytest.raises(ValidationError, match="questions"):
            PromptTemplate("t", "VQA", "{document}", "Return JSON.")
        with pytest.raises(ValidationError, match="keys"):
            PromptTemplate("t", "KIE", "{document} {questions}", "Return JSON.")

    def test_unknown_placeholder_rejected(self):
        with pytest.raises(ValidationError, match="answer_style"):
            PromptTemplate("t", "VQA", "{document} {questions} {answer_style}", "Return JSON.")
        with pytest.raises(ValidationError, match="placeholders"):
            PromptTemplate("t", "VQA", "{document} {questions}", "Return {shape}.")

    def test_load_template_file(self, tmp_path):
        path = tmp_path / "custom.json"
        path.write_text(
            '{"template_id": "x", "task_kind": "VQA",'
            ' "instruction_text": "{document}\\n{questions}", "json_output_clause": "JSON only."}'
        )
        template = load_template(path)
        assert template.template_id == "x"
        with pytest.raises(ValidationError):
            load_template(tmp_path / "missing.json")


class TestRendering:
    def test_numbered_questions(self):
        text = render_questions(["First?", "Second?", "Third?"])
        assert text == "1. First?\n2. Second?\n3. Third?"

    def test_quoted_keys(self):
        assert render_keys(["company", "date"]) == '"company", "date"'


class TestBuildPrompt:
    def test_document_embedded_verbatim_between_markers(self, templates):
        record = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        assert "Invoice\nTotal   42.00" in record.prompt_text
        assert extract_document(record.prompt_text) == "Invoice\nTotal   42.00"
        assert record.prompt_text.index(DOC_BEGIN) < record.prompt_text.index(DOC_END)

    def test_single_question_numbered_list(self, templates):
        record = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        assert "1. What is the total?" in record.prompt_text
        assert "2." not in record.prompt_text.split(DOC_END)[1]

    def test_ten_grouped_questions(self, templates):
        questions = tuple(f"Question number {i}?" for i in range(10))
        record = build_prompt(vqa_sample(questions=questions), verbalized(), templates["VQA"])
        tail = record.prompt_text.split(DOC_END)[1]
        for n in range(1, 11):
            assert f"{n}. Question number {n - 1}?" in tail
        assert '"1", "2", ...' in record.prompt_text

    def test_kie_prompt_lists_quoted_keys(self, templates):
        keys = ("company", "date", "address", "total")
        sample = TaskSample("s2", "d1", "KIE", keys, {k: k.upper() for k in keys}, "train")
        record = build_prompt(sample, verbalized(), templates["KIE"])
        assert '"company", "date", "address", "total"' in record.prompt_text

    def test_json_clause_appended_exactly_once(self, templates):
        record = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        clause = templates["VQA"].json_output_clause
        assert record.prompt_text.count(clause) == 1
        assert record.prompt_text.endswith(clause)

    def test_braces_in_document_are_not_placeholders(self, templates):
        text = "config {document} {weird} {}"
        record = build_prompt(vqa_sample(), verbalized(text=text), templates["VQA"])
        assert extract_document(record.prompt_text) == text

    def test_task_kind_mismatch_rejected(self, templates):
        with pytest.raises(ValidationError, match="VQA"):
            build_prompt(vqa_sample(), verbalized(), templates["KIE"])

    def test_doc_id_mismatch_rejected(self, templates):
        with pytest.raises(ValidationError, match="references document"):
            build_prompt(vqa_sample(doc_id="d1"), verbalized(doc_id="other"), templates["VQA"])

    def test_deterministic(self, templates):
        a = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        b = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        assert a == b

    def test_token_count_estimate(self, templates):
        record = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        assert record.token_count_estimate == round(len(record.prompt_text) / 4)

    def test_all_builtin_templates_build(self, templates):
        by_kind = {
            "VQA": vqa_sample(),
            "TableQA": TaskSample("s3", "d1", "TableQA", ("Cell?",), {"Cell?": ["1"]}, "train"),
            "TableNLI": TaskSample("s4", "d1", "TableNLI", ("Claim.",), {"Claim.": ["1"]}, "train"),
            "KIE": TaskSample("s5", "d1", "KIE", ("total",), {"total": "9"}, "train"),
            "SRC": TaskSample("s6", "d1", "SRC", ("What?",), {"What?": ["x"]}, "train"),
        }
        for kind, sample in by_kind.items():
            record = build_prompt(sample, verbalized(), templates[kind])
            assert record.prompt_text
            assert extract_document(record.prompt_text) == "Invoice\nTotal   42.00"

    def test_row_round_trip(self, templates):
        record = build_prompt(vqa_sample(), verbalized(), templates["VQA"])
        assert PromptRecord.from_row(record.to_row()) == record


class TestExtractDocument:
    def test_missing_markers_rejected(self):
        with pytest.raises(ValidationError, match="delimiters"):
            extract_document("no markers here")

    def test_round_trip_with_tricky_content(self, templates):
        text = f"line with < and > and ===\nsecond {DOC_BEGIN[3:-3]} line"
        record = build_prompt(vqa_sample(), verbalized(text=text), templates["VQA"])
        assert extract_document(record.prompt_text) == text
