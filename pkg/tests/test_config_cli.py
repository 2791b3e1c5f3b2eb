"""Tests for YAML configuration loading and the command-line interface."""

from __future__ import annotations

import json

import pytest
import yaml

from parareview.cli import (
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    EXIT_PIPELINE,
    main,
)
from parareview.config import ConfigError, RunConfig, config_from_dict, load_config
from parareview.metrics import (
    ComparisonJudgment,
    Criterion,
    Outcome,
    PresentationOrder,
    save_judgments,
)
from parareview.reranker import save_quadruples
from parareview.synthetic import make_separable_corpus


# --------------------------------------------------------------------------
# configuration


def test_defaults_from_empty_payload():
    config = config_from_dict({})
    assert config.chat.kind == "mock"
    assert config.retrieval.k == 5
    assert config.orchestration.variant == "full"
    assert config.budget.max_calls == 60
    assert "openreview.net" in config.search.blocklist


def test_nested_overrides():
    config = config_from_dict({
        "orchestration": {"variant": "cove", "n_candidate_plans": 2},
        "retrieval": {"chunk_chars": 500},
        "seed": 9,
    })
    assert config.orchestration.variant == "cove"
    assert config.orchestration.n_candidate_plans == 2
    assert config.retrieval.chunk_chars == 500
    assert config.retrieval.overlap_chars == 100  # untouched default
    assert config.seed == 9


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"chatt": {}})
    with pytest.raises(ConfigError, match=r"retrieval: unknown keys \['kk'\]"):
        config_from_dict({"retrieval": {"kk": 3}})


def test_section_must_be_mapping():
    with pytest.raises(ConfigError, match="expected a mapping"):
        config_from_dict({"chat": [1, 2]})


def test_env_interpolation(monkeypatch):
    monkeypatch.setenv("PR_TEST_KEY", "sk-123")
    config = config_from_dict({"chat": {"base_url": "https://api/${PR_TEST_KEY}/v1"}})
    assert config.chat.base_url == "https://api/sk-123/v1"


def test_env_interpolation_missing_variable(monkeypatch):
    monkeypatch.delenv("PR_MISSING_VAR", raising=False)
    with pytest.raises(ConfigError, match="PR_MISSING_VAR"):
        config_from_dict({"chat": {"base_url": "${PR_MISSING_VAR}"}})


def test_env_interpolation_in_lists(monkeypatch):
    monkeypatch.setenv("PR_EXTRA_BLOCK", "blocked.example")
    config = config_from_dict({"search": {"blocklist": ["${PR_EXTRA_BLOCK}"]}})
    assert config.search.blocklist == ["blocked.example"]


def test_load_config_from_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"seed": 4, "budget": {"max_calls": 5}}),
                    encoding="utf-8")
    config = load_config(path)
    assert config.seed == 4
    assert config.budget.max_calls == 5


def test_load_config_empty_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_config(path) == RunConfig()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml")


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("chat: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(path)


# --------------------------------------------------------------------------
# CLI plumbing


def test_usage_errors_exit_config(capsys):
    assert main([]) == EXIT_CONFIG
    capsys.readouterr()


def test_help_exits_ok(capsys):
    assert main(["--help"]) == EXIT_OK
    capsys.readouterr()


def write_review_config(tmp_path, fixtures_dir, **extra) -> str:
    payload = {
        "search": {
            "kind": "mock",
            "fixtures_path": str(fixtures_dir / "reference_run" / "search_fixtures.json"),
        },
    }
    payload.update(extra)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return str(path)


def review_argv(tmp_path, fixtures_dir, out_name: str, config: str) -> list[str]:
    run_dir = fixtures_dir / "reference_run"
    return [
        "review",
        "--paragraph-file", str(run_dir / "paragraph.txt"),
        "--paper-corpus", str(run_dir / "corpus.json"),
        "--config", config,
        "--mock-script", str(run_dir / "mock_script.json"),
        "--out", str(tmp_path / out_name),
    ]


def test_review_command_reproduces_reference_run(tmp_path, fixtures_dir, capsys):
    config = write_review_config(tmp_path, fixtures_dir)
    assert main(review_argv(tmp_path, fixtures_dir, "run1.json", config)) == EXIT_OK
    assert main(review_argv(tmp_path, fixtures_dir, "run2.json", config)) == EXIT_OK
    capsys.readouterr()

    first = (tmp_path / "run1.json").read_bytes()
    assert first == (tmp_path / "run2.json").read_bytes()
    result = json.loads(first)
    expected = json.loads(
        (fixtures_dir / "reference_run" / "expected_review.json").read_text(encoding="utf-8"))
    assert result["review"]["label"] == "Substance"
    assert result["review"]["review"] == expected["review"]
    assert result["review"]["reasoning"] == expected["reasoning"]


def test_review_missing_config_file(tmp_path, fixtures_dir, capsys):
    argv = review_argv(tmp_path, fixtures_dir, "out.json",
                       str(tmp_path / "no_such.yaml"))
    assert main(argv) == EXIT_CONFIG
    capsys.readouterr()


def test_review_mock_without_script(tmp_path, fixtures_dir, capsys):
    run_dir = fixtures_dir / "reference_run"
    assert main(["review", "--paragraph-file", str(run_dir / "paragraph.txt")]) == \
        EXIT_CONFIG
    capsys.readouterr()


def test_review_budget_exhaustion(tmp_path, fixtures_dir, capsys):
    config = write_review_config(tmp_path, fixtures_dir,
                                 budget={"max_calls": 2})
    assert main(review_argv(tmp_path, fixtures_dir, "out.json", config)) == EXIT_BUDGET
    capsys.readouterr()


def test_review_unparseable_plans_exit_pipeline(tmp_path, fixtures_dir, capsys):
    script = tmp_path / "bad_script.json"
    script.write_text(json.dumps({"rules": [], "default": "never a plan"}),
                      encoding="utf-8")
    run_dir = fixtures_dir / "reference_run"
    config = write_review_config(tmp_path, fixtures_dir)
    argv = ["review", "--paragraph-file", str(run_dir / "paragraph.txt"),
            "--config", config, "--mock-script", str(script)]
    assert main(argv) == EXIT_PIPELINE
    capsys.readouterr()


# --------------------------------------------------------------------------
# dataset CLI


def test_dataset_compile_fixture(tmp_path, fixtures_dir, capsys):
    out = tmp_path / "datapoints.jsonl"
    argv = ["dataset", "compile",
            "--papers", str(fixtures_dir / "dataset" / "papers.json"),
            "--reviews", str(fixtures_dir / "dataset" / "reviews.jsonl"),
            "--out", str(out)]
    assert main(argv) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["extracted"] == 10
    assert payload["purpose_kept"] == 5
    assert payload["aspect_kept"] == 4
    assert len(out.read_text(encoding="utf-8").splitlines()) == 4


def test_dataset_compile_missing_input(tmp_path, capsys):
    argv = ["dataset", "compile", "--papers", str(tmp_path / "none.json"),
            "--reviews", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "o")]
    assert main(argv) == EXIT_DATA
    capsys.readouterr()


# --------------------------------------------------------------------------
# eval CLI


def test_eval_metrics_pairs_and_aspects(tmp_path, capsys):
    pairs = tmp_path / "pairs.jsonl"
    pairs.write_text("\n".join([
        json.dumps({"candidate": "the cat sat on the mat",
                    "reference": "the cat sat on the mat"}),
        json.dumps({"candidate": "a b c d",
                    "references": ["a c d e", "totally different words"]}),
    ]), encoding="utf-8")
    aspects = tmp_path / "aspects.jsonl"
    aspects.write_text("\n".join([
        json.dumps({"predicted": "Substance", "gold": "Substance"}),
        json.dumps({"predicted": "Originality", "gold": "Substance"}),
    ]), encoding="utf-8")
    argv = ["eval", "metrics", "--pairs", str(pairs), "--aspects", str(aspects)]
    assert main(argv) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["pairs"] == 2
    assert 0.0 < report["bleu4"] <= 1.0
    assert report["rouge_l"] == pytest.approx((1.0 + 0.75) / 2)
    assert report["aspect_accuracy"] == pytest.approx(0.5)


def test_eval_metrics_requires_input(capsys):
    assert main(["eval", "metrics"]) == EXIT_CONFIG
    capsys.readouterr()


def test_eval_dominance_matrix_renders_totals(fixtures_dir, capsys):
    argv = ["eval", "dominance",
            "--matrix", str(fixtures_dir / "tables" / "specificity.json")]
    assert main(argv) == EXIT_OK
    out = capsys.readouterr().out
    for total in ("170.50", "97.25", "126.25", "115.50"):
        assert total in out


def double_judgments() -> list[ComparisonJudgment]:
    judgments = []
    for i, (first, second) in enumerate([
        (Outcome.A_WINS, Outcome.A_WINS),
        (Outcome.TIE, Outcome.A_WINS),
        (Outcome.B_WINS, Outcome.B_WINS),
    ]):
        for annotator, outcome in (("ann1", first), ("ann2", second)):
            judgments.append(ComparisonJudgment(
                example_id=f"e{i}", criterion=Criterion.SPECIFICITY,
                system_a="ours", system_b="gpt4", outcome=outcome,
                annotator_id=annotator,
                presentation_order=PresentationOrder.AB))
    return judgments


def test_eval_kappa_command(tmp_path, capsys):
    path = tmp_path / "judgments.jsonl"
    save_judgments(double_judgments(), path)
    assert main(["eval", "kappa", "--judgments", str(path)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["paired_items"] == 3
    assert -1.0 <= report["kappa_with_ties"] <= 1.0
    assert report["kappa_without_ties"] == pytest.approx(1.0)


def test_eval_dominance_judgments_path(tmp_path, capsys):
    path = tmp_path / "judgments.jsonl"
    save_judgments(double_judgments(), path)
    assert main(["eval", "dominance", "--judgments", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "criterion: Specificity" in out
    assert "tie rate" in out


# --------------------------------------------------------------------------
# rerank CLI


def test_rerank_train_score_eval_round_trip(tmp_path, capsys):
    model_path = tmp_path / "model.json"
    assert main(["rerank", "train", "--synthetic", "30",
                 "--out-model", str(model_path)]) == EXIT_OK
    trained = json.loads(capsys.readouterr().out)
    assert trained["model"] == str(model_path)
    assert trained["epochs"] >= 1

    quad = make_separable_corpus(1, seed=3)[0]
    paragraph_file = tmp_path / "paragraph.txt"
    paragraph_file.write_text(quad.paragraph, encoding="utf-8")
    plans_file = tmp_path / "plans.json"
    plans_file.write_text(json.dumps([quad.lacking_structure, quad.optimal]),
                          encoding="utf-8")
    assert main(["rerank", "score", "--model", str(model_path),
                 "--paragraph-file", str(paragraph_file),
                 "--plans-file", str(plans_file)]) == EXIT_OK
    scored = json.loads(capsys.readouterr().out)
    assert scored["selected_index"] == 1
    assert len(scored["scores"]) == 2

    corpus_file = tmp_path / "corpus.jsonl"
    save_quadruples(make_separable_corpus(20, seed=9), corpus_file)
    assert main(["rerank", "eval", "--model", str(model_path),
                 "--corpus", str(corpus_file)]) == EXIT_OK
    evaluated = json.loads(capsys.readouterr().out)
    assert evaluated["paragraphs"] == 20
    assert evaluated["recall_at_1"] >= 0.9


def test_rerank_train_requires_a_corpus(tmp_path, capsys):
    assert main(["rerank", "train", "--out-model", str(tmp_path / "m.json")]) == \
        EXIT_CONFIG
    capsys.readouterr()


def test_rerank_score_rejects_bad_plans_file(tmp_path, capsys):
    model_path = tmp_path / "model.json"
    main(["rerank", "train", "--synthetic", "5", "--out-model", str(model_path)])
    capsys.readouterr()
    paragraph_file = tmp_path / "p.txt"
    paragraph_file.write_text("text", encoding="utf-8")
    plans_file = tmp_path / "plans.json"
    plans_file.write_text(json.dumps({"nope": 1}), encoding="utf-8")
    assert main(["rerank", "score", "--model", str(model_path),
                 "--paragraph-file", str(paragraph_file),
                 "--plans-file", str(plans_file)]) == EXIT_CONFIG
    capsys.readouterr()
