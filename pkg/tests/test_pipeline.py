"""End-to-end tests for the CLI stages against a small synthetic corpus."""

import hashlib
import json
from pathlib import Path

import pytest

from distillforge import cli, pipeline
from distillforge.errors import ValidationError
from distillforge.jsonl import read_json, read_jsonl, write_jsonl

WORDS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
    "golf", "hotel", "india", "juliet", "kilo", "lima",
]


def _doc(doc_id, tag, words):
    tokens = []
    for i, word in enumerate(words):
        x0 = 10.0 + 40.0 * i
        tokens.append({"text": word, "x0": x0, "y0": 10.0, "x1": x0 + 30.0, "y1": 20.0})
    return {"doc_id": doc_id, "dataset_tag": tag, "pages": [{"width": 1000.0, "height": 100.0, "tokens": tokens}]}


def write_corpus(corpus_dir: Path) -> dict:
    """Small mixed corpus: 20 train samples (10 after grouping), 4 test."""
    documents = []
    samples = []
    for i in range(6):
        doc_id = f"d{i}"
        words = WORDS[i : i + 4]
        documents.append(_doc(doc_id, "DocVQA", words))
        question = "what is the code word?"
        samples.append(
            {
                "sample_id": f"{doc_id}:q0",
                "doc_id": doc_id,
                "task_kind": "VQA",
                "questions": [question],
                "gold": {question: [words[0]]},
                "split": "train",
            }
        )
    for i in range(2):
        doc_id = f"t{i}"
        words = WORDS[2 * i : 2 * i + 4]
        documents.append(_doc(doc_id, "DocVQA", words))
        question = "which word comes last?"
        samples.append(
            {
                "sample_id": f"{doc_id}:q0",
                "doc_id": doc_id,
                "task_kind": "VQA",
                "questions": [question],
                "gold": {question: [words[-1]]},
                "split": "test",
            }
        )
    for doc_id, split in (("f0", "train"), ("f1", "test")):
        documents.append(_doc(doc_id, "TabFact", WORDS[:6]))
        statement = "the table lists six words"
        samples.append(
            {
                "sample_id": f"{doc_id}:s0",
                "doc_id": doc_id,
                "task_kind": "TableNLI",
                "questions": [statement],
                "gold": {statement: ["1"]},
                "split": split,
            }
        )
    for doc_id, split in (("r0", "train"), ("r1", "test")):
        documents.append(_doc(doc_id, "SROIE", ["ACME", "LTD", "2018-03-05", "7.30"]))
        samples.append(
            {
                "sample_id": f"{doc_id}:kie",
                "doc_id": doc_id,
                "task_kind": "KIE",
                "questions": ["company", "date", "address", "total"],
                "gold": {"company": "ACME LTD", "date": "2018-03-05", "address": "1 Main St", "total": "7.30"},
                "split": split,
            }
        )
    documents.append(_doc("w0", "WebSRC", WORDS))
    for i in range(12):
        question = f"what is in cell {i}?"
        samples.append(
            {
                "sample_id": f"w0:q{i}",
                "doc_id": "w0",
                "task_kind": "SRC",
                "questions": [question],
                "gold": {question: [WORDS[i]]},
                "split": "train",
            }
        )

    corpus_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(corpus_dir / "documents.jsonl", documents)
    write_jsonl(corpus_dir / "samples.jsonl", samples)
    return {"documents": len(documents), "samples": len(samples)}


def run_cli(*argv) -> int:
    return cli.main([str(a) for a in argv])


def bootstrap(tmp_path: Path, seed=7, extra_ingest=()) -> pipeline.RunPaths:
    """Corpus + ingest/verbalize/prompt/label with the stub teacher."""
    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    run_dir = tmp_path / "run"
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus, "--seed", seed, *extra_ingest) == 0
    assert run_cli("verbalize", "--run-dir", run_dir) == 0
    assert run_cli("prompt", "--run-dir", run_dir) == 0
    assert run_cli("label", "--run-dir", run_dir, "--stub-teacher") == 0
    return pipeline.RunPaths(run_dir)


def fabricate_predictions(paths: pipeline.RunPaths, epoch=1, model_tag="student-v1"):
    """Deterministic stand-in for a trainer: corrupt some targets, answer some test golds."""
    labels = {row["sample_id"]: row["canonical_target"] for _, row in read_jsonl(paths.labels)}
    rows = []
    for sample_id, target in labels.items():
        digest = hashlib.sha256(sample_id.encode()).digest()[0]
        text = target if digest % 3 else target[:-2] + "zz"
        rows.append({"sample_id": sample_id, "epoch": epoch, "model_tag": model_tag, "output_text": text})
    for _, row in read_jsonl(paths.samples):
        if row["split"] != "test":
            continue
        gold = row["gold"]
        if row["task_kind"] == "KIE":
            answer = {k: v for k, v in gold.items()}
        else:
            answer = {str(n): vals[0] for n, vals in enumerate(gold.values(), start=1)}
        digest = hashlib.sha256(row["sample_id"].encode()).digest()[0]
        text = json.dumps(answer) if digest % 2 else "no idea"
        rows.append({"sample_id": row["sample_id"], "epoch": epoch, "model_tag": model_tag, "output_text": text})
    write_jsonl(paths.predictions, rows)


# --------------------------------------------------------------------------
# Stage flow
# --------------------------------------------------------------------------

def test_ingest_writes_config_split_and_grouped_samples(tmp_path):
    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    run_dir = tmp_path / "run"
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus, "--seed", 3) == 0
    paths = pipeline.RunPaths(run_dir)

    config = pipeline.RunConfig.from_json(read_json(paths.config))
    assert config.seed == 3
    assert config.schedule == "B"
    assert config.templates_hash

    samples = [row for _, row in read_jsonl(paths.samples)]
    grouped = [s for s in samples if s["doc_id"] == "w0"]
    assert [s["sample_id"] for s in grouped] == ["w0#g1", "w0#g2"]
    assert [len(s["questions"]) for s in grouped] == [10, 2]
    flattened = [q for s in grouped for q in s["questions"]]
    assert flattened == [f"what is in cell {i}?" for i in range(12)]

    split = read_json(paths.split)
    assert split["config_hash"] == config.config_hash
    assert split["pool_size"] == 10
    assert split["train_count"] == 9
    assert split["eval_count"] == 1


def test_stage_chain_counts_and_idempotent_reruns(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    assert sum(1 for _ in read_jsonl(paths.verbalized)) == 13
    assert sum(1 for _ in read_jsonl(paths.prompts)) == 14  # every sample, test included
    assert sum(1 for _ in read_jsonl(paths.labels)) == 10  # train + eval_base only
    capsys.readouterr()

    before = paths.labels.read_bytes()
    for command in ("verbalize", "prompt", "label"):
        assert run_cli(command, "--run-dir", paths.run_dir) == 0
        assert "skipped" in capsys.readouterr().out
    assert paths.labels.read_bytes() == before


def test_label_reruns_from_cache_after_deleting_output(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    paths.labels.unlink()
    state = read_json(paths.state)
    del state["stages"]["label"]
    (paths.state).write_text(json.dumps(state))
    capsys.readouterr()

    assert run_cli("label", "--run-dir", paths.run_dir, "--stub-teacher") == 0
    out = capsys.readouterr().out
    assert "cache_hits=10 calls=0" in out
    assert sum(1 for _ in read_jsonl(paths.labels)) == 10


def test_epoch1_is_unweighted_train_split_in_order(tmp_path):
    paths = bootstrap(tmp_path)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 1) == 0

    split = read_json(paths.split)
    rows = [row for _, row in read_jsonl(paths.epoch_dataset(1))]
    assert [r["sample_id"] for r in rows] == split["member_ids"]["train"]
    labels = {row["sample_id"]: row for _, row in read_jsonl(paths.labels)}
    prompts = {row["sample_id"]: row for _, row in read_jsonl(paths.prompts)}
    for row in rows:
        assert row["target"] == labels[row["sample_id"]]["canonical_target"]
        assert row["prompt"] == prompts[row["sample_id"]]["prompt_text"]
        assert isinstance(row["gold"], dict) and row["gold"]

    manifest = read_json(paths.epoch_manifest(1))
    assert manifest["mode"] == "unweighted"
    assert manifest["tau"] is None
    assert manifest["similarity_source_epoch"] is None
    assert manifest["drawn_size"] == split["train_count"]
    assert manifest["dataset_sha256"] == hashlib.sha256(paths.epoch_dataset(1).read_bytes()).hexdigest()


def test_later_epochs_need_predictions_then_use_them(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2) == 2
    assert "predictions.jsonl" in capsys.readouterr().err

    fabricate_predictions(paths)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2) == 0

    eval_this = read_json(paths.eval_this)
    assert eval_this["pool_size"] == 9
    assert eval_this["eval_count"] == 1
    drawn = [row["sample_id"] for _, row in read_jsonl(paths.epoch_dataset(2))]
    assert len(drawn) == 8
    assert set(drawn).isdisjoint(eval_this["member_ids"]["eval"])
    assert set(drawn) == set(eval_this["member_ids"]["train"])  # full-pool draw, reordered

    manifest = read_json(paths.epoch_manifest(2))
    assert manifest["tau"] == pytest.approx(0.5)  # schedule B at epoch 2
    assert manifest["similarity_source_epoch"] == 1
    assert manifest["missing_predictions"] == 0
    assert len(manifest["decile_mean_similarity"]) == 10

    sims = {row["sample_id"]: row["similarity"] for _, row in read_jsonl(paths.similarities)}
    assert set(sims) == set(eval_this["member_ids"]["train"])
    assert any(v < 1.0 for v in sims.values()) and any(v == 1.0 for v in sims.values())


def test_eval_this_is_carved_once_and_reused(tmp_path):
    paths = bootstrap(tmp_path)
    fabricate_predictions(paths)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2) == 0
    carved = paths.eval_this.read_bytes()
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 3) == 0
    assert paths.eval_this.read_bytes() == carved
    manifest3 = read_json(paths.epoch_manifest(3))
    assert manifest3["tau"] == pytest.approx(0.5 - 1 / 6)


def test_two_runs_same_seed_are_byte_identical(tmp_path):
    outputs = []
    for name in ("one", "two"):
        base = tmp_path / name
        paths = bootstrap(base, seed=11)
        fabricate_predictions(paths)
        for epoch in (1, 2, 3):
            assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", epoch) == 0
        assert run_cli("evaluate", "--run-dir", paths.run_dir) == 0
        snapshot = {}
        for path in sorted(paths.run_dir.rglob("*")):
            if path.is_dir() or path.name == "state.json":
                continue
            snapshot[str(path.relative_to(paths.run_dir))] = path.read_bytes()
        outputs.append(snapshot)
    assert outputs[0].keys() == outputs[1].keys()
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], f"{name} differs between identical runs"


def test_different_seed_changes_epoch_draw(tmp_path):
    datasets = []
    for seed in (1, 2):
        base = tmp_path / f"s{seed}"
        paths = bootstrap(base, seed=seed)
        fabricate_predictions(paths)
        assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2) == 0
        datasets.append([row["sample_id"] for _, row in read_jsonl(paths.epoch_dataset(2))])
    assert datasets[0] != datasets[1]


def test_evaluate_and_report_end_to_end(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    fabricate_predictions(paths)
    for epoch in (1, 2):
        assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", epoch) == 0
    assert run_cli("evaluate", "--run-dir", paths.run_dir) == 0
    out = capsys.readouterr().out
    assert "DocVQA" in out and "average" in out

    report = read_json(paths.report)
    assert report["epoch"] == 1
    assert report["model_tag"] == "student-v1"
    assert set(report["per_dataset"]) == {"DocVQA", "TabFact", "SROIE"}
    assert report["per_dataset"]["DocVQA"]["metric_name"] == "anls"
    assert report["per_dataset"]["TabFact"]["metric_name"] == "accuracy"
    assert report["per_dataset"]["SROIE"]["metric_name"] == "sroie_type_aware"
    assert 0.0 <= report["average"] <= 1.0

    assert run_cli("report", "--run-dir", paths.run_dir) == 0
    out = capsys.readouterr().out
    assert "decile mean similarity" in out
    assert "epoch 1: unweighted" in out


# --------------------------------------------------------------------------
# Errors and exit codes
# --------------------------------------------------------------------------

def test_missing_stages_name_the_command_to_run(tmp_path, capsys):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    cases = [
        (("verbalize",), "distill-forge ingest"),
        (("prompt",), "distill-forge ingest"),
        (("label",), "distill-forge ingest"),
        (("build-epoch", "--epoch", "1"), "distill-forge ingest"),
        (("evaluate",), "distill-forge ingest"),
        (("report",), "distill-forge ingest"),
    ]
    for argv, expected in cases:
        assert run_cli(*argv, "--run-dir", run_dir) == 2
        assert expected in capsys.readouterr().err

    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus) == 0
    assert run_cli("prompt", "--run-dir", run_dir) == 2
    assert "distill-forge verbalize" in capsys.readouterr().err
    assert run_cli("verbalize", "--run-dir", run_dir) == 0
    assert run_cli("build-epoch", "--run-dir", run_dir, "--epoch", 1) == 2
    assert "distill-forge prompt" in capsys.readouterr().err
    assert run_cli("prompt", "--run-dir", run_dir) == 0
    assert run_cli("build-epoch", "--run-dir", run_dir, "--epoch", 1) == 2
    assert "distill-forge label" in capsys.readouterr().err
    assert run_cli("evaluate", "--run-dir", run_dir) == 2
    assert "predictions.jsonl" in capsys.readouterr().err
    assert run_cli("report", "--run-dir", run_dir) == 2
    assert "distill-forge evaluate" in capsys.readouterr().err


def test_reingest_with_different_config_is_refused(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    run_dir = tmp_path / "run"
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus, "--seed", 1) == 0
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus, "--seed", 2) == 2
    assert "different configuration" in capsys.readouterr().err
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus, "--seed", 1) == 0


def test_report_refuses_mixed_config_hashes(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    fabricate_predictions(paths)
    for epoch in (1, 2):
        assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", epoch) == 0
    assert run_cli("evaluate", "--run-dir", paths.run_dir) == 0
    assert run_cli("report", "--run-dir", paths.run_dir) == 0

    manifest = read_json(paths.epoch_manifest(2))
    manifest["config_hash"] = "0" * 64
    paths.epoch_manifest(2).write_text(json.dumps(manifest))
    assert run_cli("report", "--run-dir", paths.run_dir) == 2
    err = capsys.readouterr().err
    assert "mixes artifacts" in err


def test_unreachable_teacher_exits_3(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    run_dir = tmp_path / "run"
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus) == 0
    assert run_cli("verbalize", "--run-dir", run_dir) == 0
    assert run_cli("prompt", "--run-dir", run_dir) == 0
    code = run_cli(
        "label", "--run-dir", run_dir, "--endpoint", "http://127.0.0.1:9", "--max-retries", 0, "--jobs", 8
    )
    assert code == 3
    assert "teacher service error" in capsys.readouterr().err


def test_label_without_endpoint_is_a_validation_error(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    write_corpus(corpus)
    run_dir = tmp_path / "run"
    assert run_cli("ingest", "--run-dir", run_dir, "--corpus", corpus) == 0
    assert run_cli("verbalize", "--run-dir", run_dir) == 0
    assert run_cli("prompt", "--run-dir", run_dir) == 0
    assert run_cli("label", "--run-dir", run_dir) == 2
    assert "--stub-teacher" in capsys.readouterr().err


def test_build_epoch_range_is_checked(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 9) == 2
    assert "out of range" in capsys.readouterr().err
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 0) == 2


def test_mixed_model_tags_require_disambiguation(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    fabricate_predictions(paths)
    extra = [
        {"sample_id": "zzz", "epoch": 1, "model_tag": "other", "output_text": "x"}
    ]
    rows = [row for _, row in read_jsonl(paths.predictions)] + extra
    write_jsonl(paths.predictions, rows)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2) == 2
    assert "--model-tag" in capsys.readouterr().err
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2, "--model-tag", "student-v1") == 0


def test_drawn_size_flag_limits_epoch(tmp_path):
    paths = bootstrap(tmp_path)
    fabricate_predictions(paths)
    assert run_cli("build-epoch", "--run-dir", paths.run_dir, "--epoch", 2, "--drawn-size", 4) == 0
    drawn = [row["sample_id"] for _, row in read_jsonl(paths.epoch_dataset(2))]
    assert len(drawn) == 4
    assert read_json(paths.epoch_manifest(2))["drawn_size"] == 4


def test_run_config_validation():
    with pytest.raises(ValidationError):
        pipeline.RunConfig(schedule="Z")
    with pytest.raises(ValidationError):
        pipeline.RunConfig(eval_fraction=0.0)
    with pytest.raises(ValidationError):
        pipeline.RunConfig(total_epochs=1)
    with pytest.raises(ValidationError):
        pipeline.RunConfig(group_tags=("NotADataset",))
    with pytest.raises(ValidationError):
        pipeline.RunConfig(sampling_mode="sometimes")


def test_config_hash_ignores_transport_fields():
    a = pipeline.RunConfig(seed=5, endpoint_url="http://a.example")
    b = pipeline.RunConfig(seed=5, endpoint_url="http://b.example")
    c = pipeline.RunConfig(seed=6, endpoint_url="http://a.example")
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


def test_edited_config_file_is_detected(tmp_path, capsys):
    paths = bootstrap(tmp_path)
    obj = read_json(paths.config)
    obj["seed"] = obj["seed"] + 1  # stale hash now
    paths.config.write_text(json.dumps(obj))
    assert run_cli("verbalize", "--run-dir", paths.run_dir) == 2
    assert "edited" in capsys.readouterr().err
