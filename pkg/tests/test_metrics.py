import json
import random
import string
from pathlib import Path

import pytest

from distillforge.curriculum import PredictionRecord
from distillforge.errors import ValidationError
from distillforge.ingest import TaskSample
from distillforge.metrics import (
    EvalReport,
    anls,
    evaluate,
    exact_accuracy,
    sroie_type_aware,
    ungroup_answers,
)
from oracles import anls_single

FIXTURE = Path(__file__).parent / "data" / "metrics_fixture.json"


def pred(sample_id, text, epoch=1, model_tag="student"):
    return PredictionRecord(sample_id=sample_id, epoch=epoch, model_tag=model_tag, output_text=text)


class TestFrozenFixture:
    def test_all_thirty_cases(self):
        cases = json.loads(FIXTURE.read_text(encoding="utf-8"))
        assert len(cases) == 30
        for case in cases:
            if case["metric"] == "anls":
                got = anls(case["prediction"], case["golds"])
            elif case["metric"] == "accuracy":
                got = float(exact_accuracy(case["prediction"], case["golds"]))
            else:
                got = sroie_type_aware(case["prediction"], case["gold"])
            assert got == pytest.approx(case["expected"], abs=1e-9), case["name"]


class TestAnls:
    def test_matches_reference_on_random_pairs(self):
        rng = random.Random(4242)
        alphabet = string.ascii_lowercase[:6] + " "
        for _ in range(500):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
            assert anls(a, [b]) == pytest.approx(anls_single(a, b), abs=1e-12)

    def test_self_match_is_one(self):
        rng = random.Random(7)
        for _ in range(50):
            text = "".join(rng.choice("abcxyz 123") for _ in range(rng.randint(1, 12)))
            if not text.strip():
                continue
            assert anls(text, [text]) == 1.0

    def test_extra_gold_never_decreases_score(self):
        rng = random.Random(99)
        for _ in range(200):
            words = ["".join(rng.choice("abcd") for _ in range(rng.randint(1, 6))) for _ in range(3)]
            base = anls(words[0], [words[1]])
            assert anls(words[0], [words[1], words[2]]) >= base - 1e-12

    def test_threshold_is_exposed(self):
        # NL = 0.25 fails a tighter threshold
        assert anls("1999", ["1998"], threshold=0.2) == 0.0

    def test_empty_golds_rejected(self):
        with pytest.raises(ValidationError):
            anls("x", [])

    def test_bounds(self):
        rng = random.Random(123)
        for _ in range(200):
            a = "".join(rng.choice("ab") for _ in range(rng.randint(0, 6)))
            b = "".join(rng.choice("ab") for _ in range(rng.randint(0, 6)))
            assert 0.0 <= anls(a, [b]) <= 1.0


class TestExactAccuracy:
    def test_empty_golds_rejected(self):
        with pytest.raises(ValidationError):
            exact_accuracy("x", [])

    def test_numeric_forms(self):
        assert exact_accuracy("1,234.50", ["1234.5"]) == 1
        assert exact_accuracy("01", ["1"]) == 1
        assert exact_accuracy("nan", ["nan"]) == 1  # string path, not NaN arithmetic

    def test_non_numeric_mismatch(self):
        assert exact_accuracy("entailed", ["1"]) == 0


class TestSroie:
    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="unknown receipt keys"):
            sroie_type_aware("{}", {"vendor": "x"})

    def test_empty_gold_rejected(self):
        with pytest.raises(ValidationError):
            sroie_type_aware("{}", {})

    def test_numeric_json_value_coerced(self):
        assert sroie_type_aware('{"total": 42.0}', {"total": "42.00"}) == 1.0


class TestUngroup:
    def test_parsed_object(self):
        answers, ok = ungroup_answers('{"1": "a", "2": "b", "3": "c"}', 3)
        assert ok and answers == ["a", "b", "c"]

    def test_missing_keys_become_empty(self):
        answers, ok = ungroup_answers('{"2": "b"}', 3)
        assert ok and answers == ["", "b", ""]

    def test_prose_goes_to_first_question(self):
        answers, ok = ungroup_answers("no json here", 3)
        assert not ok and answers == ["no json here", "", ""]

    def test_numbers_coerced_to_strings(self):
        answers, ok = ungroup_answers('{"1": 42}', 1)
        assert ok and answers == ["42"]


def vqa(sample_id, doc_id, question, golds, split="test"):
    return TaskSample(sample_id, doc_id, "VQA", (question,), {question: list(golds)}, split)


class TestEvaluate:
    def scenario(self):
        doc_tags = {"dv1": "DocVQA", "tf1": "TabFact", "sr1": "SROIE"}
        samples = [
            vqa("q1", "dv1", "Total?", ["42.00"]),
            vqa("q2", "dv1", "Year?", ["1998"]),
            TaskSample("t1", "tf1", "TableNLI", ("Claim A.",), {"Claim A.": ["1"]}, "test"),
            TaskSample(
                "k1",
                "sr1",
                "KIE",
                ("company", "total"),
                {"company": "ACME LTD", "total": "42.00"},
                "test",
            ),
        ]
        predictions = [
            pred("q1", '{"1": "42.00"}'),
            pred("q2", '{"1": "1999"}'),
            pred("t1", '{"1": "1"}'),
            pred("k1", '{"company": "acme ltd", "total": "nothing"}'),
        ]
        return predictions, samples, doc_tags

    def test_routing_and_values(self):
        predictions, samples, doc_tags = self.scenario()
        report = evaluate(predictions, samples, doc_tags)
        assert set(report.per_dataset) == {"DocVQA", "TabFact", "SROIE"}
        assert report.per_dataset["DocVQA"]["metric_name"] == "anls"
        assert report.per_dataset["TabFact"]["metric_name"] == "accuracy"
        assert report.per_dataset["SROIE"]["metric_name"] == "sroie_type_aware"
        assert report.per_dataset["DocVQA"]["value"] == pytest.approx((1.0 + 0.75) / 2)
        assert report.per_dataset["TabFact"]["value"] == 1.0
        assert report.per_dataset["SROIE"]["value"] == 0.5
        assert report.per_dataset["DocVQA"]["n_samples"] == 2
        expected_avg = (0.875 + 1.0 + 0.5) / 3
        assert report.average == pytest.approx(expected_avg)

    def test_missing_prediction_scores_zero(self):
        predictions, samples, doc_tags = self.scenario()
        report = evaluate(predictions[1:], samples, doc_tags)
        assert report.per_dataset["DocVQA"]["value"] == pytest.approx(0.75 / 2)

    def test_duplicate_prediction_rejected(self):
        predictions, samples, doc_tags = self.scenario()
        with pytest.raises(ValidationError, match="duplicate prediction"):
            evaluate(predictions + [pred("q1", "{}")], samples, doc_tags)

    def test_websrc_is_unroutable_without_override(self):
        samples = [TaskSample("w1", "web1", "SRC", ("Q?",), {"Q?": ["a"]}, "test")]
        predictions = [pred("w1", '{"1": "a"}')]
        with pytest.raises(ValidationError, match="no metric"):
            evaluate(predictions, samples, {"web1": "WebSRC"})
        report = evaluate(predictions, samples, {"web1": "WebSRC"}, metric_overrides={"WebSRC": "anls"})
        assert report.per_dataset["WebSRC"]["value"] == 1.0

    def test_unknown_document_rejected(self):
        samples = [vqa("q1", "ghost", "Q?", ["a"])]
        with pytest.raises(ValidationError, match="unknown document"):
            evaluate([], samples, {})

    def test_grouped_equals_ungrouped(self):
        doc_tags = {"d1": "DocVQA"}
        questions = ("A?", "B?", "C?")
        golds = {"A?": ["alpha"], "B?": ["beta"], "C?": ["gamma"]}
        grouped = [TaskSample("g1", "d1", "VQA", questions, golds, "test")]
        grouped_pred = [pred("g1", '{"1": "alpha", "2": "bets", "3": "wrong"}')]
        single = [vqa(f"s{i}", "d1", q, golds[q]) for i, q in enumerate(questions)]
        single_preds = [
            pred("s0", '{"1": "alpha"}'),
            pred("s1", '{"1": "bets"}'),
            pred("s2", '{"1": "wrong"}'),
        ]
        a = evaluate(grouped_pred, grouped, doc_tags).per_dataset["DocVQA"]["value"]
        b = evaluate(single_preds, single, doc_tags).per_dataset["DocVQA"]["value"]
        assert a == pytest.approx(b)

    def test_prose_prediction_hits_first_question_only(self):
        doc_tags = {"d1": "DocVQA"}
        questions = ("A?", "B?")
        golds = {"A?": ["paris"], "B?": ["rome"]}
        samples = [TaskSample("g1", "d1", "VQA", questions, golds, "test")]
        report = evaluate([pred("g1", "Paris")], samples, doc_tags)
        assert report.per_dataset["DocVQA"]["value"] == pytest.approx(0.5)

    def test_synthetic_rows_split_by_task_kind(self):
        doc_tags = {"d1": "synthetic", "d2": "synthetic"}
        samples = [
            vqa("q1", "d1", "Q?", ["a"]),
            TaskSample("t1", "d2", "TableNLI", ("C.",), {"C.": ["0"]}, "test"),
        ]
        predictions = [pred("q1", '{"1": "a"}'), pred("t1", '{"1": "0"}')]
        report = evaluate(predictions, samples, doc_tags)
        assert set(report.per_dataset) == {"synthetic/VQA", "synthetic/TableNLI"}
        assert report.per_dataset["synthetic/TableNLI"]["metric_name"] == "accuracy"

    def test_empty_samples_rejected(self):
        with pytest.raises(ValidationError):
            evaluate([], [], {})

    def test_report_round_trip(self):
        predictions, samples, doc_tags = self.scenario()
        report = evaluate(predictions, samples, doc_tags)
        back = EvalReport.from_json(json.loads(json.dumps(report.to_json())))
        assert back.average == pytest.approx(report.average)
        assert back.per_dataset == report.per_dataset
