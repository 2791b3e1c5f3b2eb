"""Command-line interface.

Conventions: stdout carries data (JSON or rendered tables), stderr carries
diagnostics. Exit codes are stable: 0 success, 2 configuration or usage
errors, 3 backend failures, 4 budget exhaustion, 5 pipeline failures,
6 bad input data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import annotation as annot
from . import dataset as ds
from . import metrics as mx
from .backends import (
    Budget,
    BudgetExceeded,
    BackendError,
    HttpChatBackend,
    HttpEmbeddingBackend,
    HttpFetcher,
    HttpSearchBackend,
    MockChatBackend,
    MockEmbeddingBackend,
    MockScript,
    MockSearchBackend,
    RetryPolicy,
    TraceLog,
)
from .config import ConfigError, RunConfig, load_config
from .investigator import Document, load_corpus
from .pipeline import (
    ControllerFailure,
    NoValidPlan,
    PipelineBackends,
    PipelineSettings,
    QuoteNotInParagraph,
    ReviewParseFailure,
    run_review,
)
from .prompting import PromptLibrary
from .reranker import (
    DivergenceDetected,
    ExternalScorer,
    FeatureExtractor,
    ScoringModel,
    TrainConfig,
    load_quadruples,
    recall_at_1,
    select_best,
    train,
)
from .service import run_server
from .synthetic import make_separable_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_BUDGET = 4
EXIT_PIPELINE = 5
EXIT_DATA = 6


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        print(text)


def _api_key(env_name: str) -> str:
    import os

    if not env_name:
        return ""
    value = os.environ.get(env_name, "")
    if not value:
        raise ConfigError(f"environment variable {env_name!r} is not set")
    return value


def _build_backends(config: RunConfig, mock_script: str | None) -> PipelineBackends:
    prompts = PromptLibrary(config.prompts_dir or None)
    trace = TraceLog(config.trace_path or None)
    budget = Budget(config.budget.max_calls, config.budget.max_tokens)

    if config.chat.kind == "mock" or mock_script:
        script_path = mock_script or config.chat.script_path
        if not script_path:
            raise ConfigError("mock chat backend needs a script path")
        chat_backend = MockChatBackend(MockScript.from_file(script_path))
        retry = RetryPolicy(base_delay=0.0)
    elif config.chat.kind == "http":
        if not config.chat.base_url:
            raise ConfigError("chat.base_url is required for the http backend")
        chat_backend = HttpChatBackend(
            config.chat.base_url, model=config.chat.model,
            api_key=_api_key(config.chat.api_key_env), timeout=config.chat.timeout)
        retry = RetryPolicy()
    else:
        raise ConfigError(f"unknown chat backend kind {config.chat.kind!r}")

    if config.embedding.kind == "mock":
        embed_backend = MockEmbeddingBackend(dim=config.embedding.dim)
    elif config.embedding.kind == "http":
        if not config.embedding.base_url:
            raise ConfigError("embedding.base_url is required for the http backend")
        embed_backend = HttpEmbeddingBackend(
            config.embedding.base_url, model=config.embedding.model,
            api_key=_api_key(config.embedding.api_key_env), timeout=config.embedding.timeout)
    else:
        raise ConfigError(f"unknown embedding backend kind {config.embedding.kind!r}")

    from .backends import ChatClient, EmbeddingClient, SearchClient

    chat = ChatClient(chat_backend, trace=trace, budget=budget, retry=retry)
    embedder = EmbeddingClient(embed_backend, trace=trace, retry=retry)

    search = None
    fetcher = None
    if config.search.kind == "mock":
        if config.search.fixtures_path:
            fixtures = json.loads(Path(config.search.fixtures_path).read_text(encoding="utf-8"))
        else:
            fixtures = {}
        backend = MockSearchBackend(fixtures)
        search = SearchClient(backend, blocklist=tuple(config.search.blocklist), trace=trace)
        fetcher = backend
    elif config.search.kind == "http":
        if not config.search.base_url:
            raise ConfigError("search.base_url is required for the http backend")
        backend = HttpSearchBackend(
            config.search.base_url, api_key=_api_key(config.search.api_key_env),
            timeout=config.search.timeout)
        search = SearchClient(backend, blocklist=tuple(config.search.blocklist), trace=trace)
        fetcher = HttpFetcher(max_bytes=config.search.max_fetch_bytes)
    elif config.search.kind != "none":
        raise ConfigError(f"unknown search backend kind {config.search.kind!r}")

    scorer = None
    if config.reranker.external_scorer_url:
        scorer = ExternalScorer(config.reranker.external_scorer_url)
    elif config.reranker.model_path:
        scorer = ScoringModel.load(config.reranker.model_path,
                                   extractor=FeatureExtractor(embedder=embedder))

    return PipelineBackends(chat=chat, embedder=embedder, prompts=prompts,
                            search=search, fetcher=fetcher, scorer=scorer)


def _load_documents(corpus_arg: str) -> list[Document]:
    path = Path(corpus_arg)
    if not path.exists():
        raise ConfigError(f"paper corpus not found: {corpus_arg}")
    if path.suffix == ".json":
        return load_corpus(path)
    return [Document(doc_id=path.stem, text=path.read_text(encoding="utf-8"))]


def _cmd_review(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    if args.variant:
        config.orchestration.variant = args.variant
    backends = _build_backends(config, args.mock_script)
    settings = PipelineSettings(
        variant=config.orchestration.variant,
        n_candidate_plans=config.orchestration.n_candidate_plans,
        planner_temperature=config.orchestration.planner_temperature,
        controller_retries=config.orchestration.controller_retries,
        reviewer_retries=config.orchestration.reviewer_retries,
        k_chunks=config.retrieval.k,
        chunk_chars=config.retrieval.chunk_chars,
        overlap_chars=config.retrieval.overlap_chars,
        max_web_hits=config.retrieval.max_web_hits,
        quote_fuzzy_threshold=config.orchestration.quote_fuzzy_threshold,
    )
    paragraph = Path(args.paragraph_file).read_text(encoding="utf-8").strip()
    documents = _load_documents(args.paper_corpus) if args.paper_corpus else []
    result = run_review(paragraph, documents, backends, settings)
    _log(f"label: {result.review.label.value}")
    _log(f"review: {result.review.review_text}")
    _emit(result.to_json(), args.out)
    return EXIT_OK


def _cmd_rerank_train(args: argparse.Namespace) -> int:
    if args.corpus:
        quadruples = load_quadruples(args.corpus)
    elif args.synthetic:
        quadruples = make_separable_corpus(args.synthetic, seed=args.seed)
    else:
        raise ConfigError("rerank train needs --corpus or --synthetic N")
    overrides = {}
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.max_epochs is not None:
        overrides["max_epochs"] = args.max_epochs
    model = train(quadruples, TrainConfig(seed=args.seed, **overrides))
    model.save(args.out_model)
    report = model.report
    _log(f"trained on {len(quadruples)} paragraphs; "
         f"best epoch {report.best_epoch}, holdout recall@1 "
         f"{report.holdout_recall[max(report.best_epoch - 1, 0)]:.3f}"
         if report and report.holdout_recall
         else f"trained on {len(quadruples)} paragraphs")
    print(json.dumps({"model": str(args.out_model),
                      "epochs": len(report.epoch_losses) if report else 0,
                      "holdout_recall": report.holdout_recall if report else []},
                     sort_keys=True))
    return EXIT_OK


def _cmd_rerank_score(args: argparse.Namespace) -> int:
    model = ScoringModel.load(args.model)
    paragraph = Path(args.paragraph_file).read_text(encoding="utf-8").strip()
    payload = json.loads(Path(args.plans_file).read_text(encoding="utf-8"))
    if isinstance(payload, dict):
        payload = payload.get("plans", [])
    if not isinstance(payload, list) or not all(isinstance(p, str) for p in payload):
        raise ConfigError("plans file must hold a JSON list of plan texts")
    if not payload:
        raise ConfigError("plans file is empty")
    scores = [model.score(paragraph, plan) for plan in payload]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    print(json.dumps({"scores": scores, "selected_index": best}, sort_keys=True))
    return EXIT_OK


def _cmd_rerank_eval(args: argparse.Namespace) -> int:
    model = ScoringModel.load(args.model)
    quadruples = load_quadruples(args.corpus)
    recall = recall_at_1(model, quadruples)
    print(json.dumps({"recall_at_1": recall, "paragraphs": len(quadruples)}, sort_keys=True))
    return EXIT_OK


def _cmd_dataset_compile(args: argparse.Namespace) -> int:
    papers = ds.load_papers(args.papers)
    reviews = ds.load_reviews(args.reviews)
    purpose_handle = aspect_handle = None
    if args.classifier and args.classifier != "rule":
        if not args.classifier.startswith("http"):
            raise ConfigError("classifier must be 'rule' or an http(s) URL")
        purpose_handle = ds.ExternalClassifier(args.classifier.rstrip("/") + "/purpose")
        aspect_handle = ds.ExternalClassifier(args.classifier.rstrip("/") + "/aspect")
    datapoints, counts = ds.compile_datapoints(
        papers, reviews, purpose_handle=purpose_handle, aspect_handle=aspect_handle,
        q_min=args.min_ngram)
    _log(f"extracted pairs: {counts.extracted}")
    _log(f"after purpose filter: {counts.purpose_kept}")
    _log(f"after aspect filter: {counts.aspect_kept}")
    ds.save_datapoints(datapoints, args.out)
    print(json.dumps({"out": str(args.out), "extracted": counts.extracted,
                      "purpose_kept": counts.purpose_kept,
                      "aspect_kept": counts.aspect_kept}, sort_keys=True))
    return EXIT_OK


def _cmd_eval_metrics(args: argparse.Namespace) -> int:
    report: dict[str, object] = {}
    if args.pairs:
        rows = [json.loads(line) for line in
                Path(args.pairs).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not rows:
            raise ConfigError("pairs file is empty")
        bleu_sum = rouge_sum = meteor_sum = 0.0
        for row in rows:
            refs = row.get("references") or [row["reference"]]
            bleu_sum += mx.bleu4(row["candidate"], refs)
            rouge_sum += max(mx.rouge_l(row["candidate"], ref) for ref in refs)
            meteor_sum += max(mx.meteor_simplified(row["candidate"], ref) for ref in refs)
        n = len(rows)
        report["bleu4"] = bleu_sum / n
        report["rouge_l"] = rouge_sum / n
        report["meteor"] = meteor_sum / n
        report["pairs"] = n
    if args.aspects:
        rows = [json.loads(line) for line in
                Path(args.aspects).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not rows:
            raise ConfigError("aspects file is empty")
        aspect_report = mx.aspect_scores([r["predicted"] for r in rows],
                                         [r["gold"] for r in rows])
        report["aspect_accuracy"] = aspect_report.accuracy
        report["aspect_f1"] = {aspect.value: f1 for aspect, f1 in aspect_report.f1.items()}
    if not report:
        raise ConfigError("eval metrics needs --pairs and/or --aspects")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _cmd_eval_dominance(args: argparse.Namespace) -> int:
    if args.matrix:
        payload = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
        cells = {}
        for key, mass in payload["cells"].items():
            row, col = key.split("|")
            cells[(row, col)] = float(mass)
        table = mx.DominanceTable.from_cells(tuple(payload["systems"]), cells)
        print(mx.render_dominance_table(table))
        return EXIT_OK
    judgments = mx.load_judgments(args.judgments)
    if not judgments:
        raise ConfigError("no judgments found")
    criteria = sorted({j.criterion for j in judgments}, key=lambda c: c.value)
    for criterion in criteria:
        table = mx.dominance(judgments, criterion,
                             average_doubles=not args.raw_doubles)
        print(f"criterion: {criterion.value}")
        print(mx.render_dominance_table(table))
        subset = [j for j in judgments if j.criterion == criterion]
        print(f"tie rate: {mx.tie_rate(subset, criterion):.2f}%")
        print()
    return EXIT_OK


def _cmd_eval_kappa(args: argparse.Namespace) -> int:
    judgments = mx.load_judgments(args.judgments)
    pairs = mx.paired_outcomes(judgments)
    if not pairs:
        raise ConfigError("no double-annotated items found")
    labels_a, labels_b = pairs
    with_ties = mx.cohen_kappa(labels_a, labels_b, include_ties=True)
    without_ties = mx.cohen_kappa(labels_a, labels_b, include_ties=False,
                                  tie_drop_mode=args.tie_drop_mode)
    print(json.dumps({"kappa_with_ties": with_ties,
                      "kappa_without_ties": without_ties,
                      "paired_items": len(labels_a)}, sort_keys=True))
    return EXIT_OK


def _cmd_annotate_serve(args: argparse.Namespace) -> int:
    store = annot.SessionStore.from_definition(args.session_file, args.journal)
    _log(f"session {store.session.session_id}: "
         f"{len(store.session.tasks)} tasks, "
         f"{store.session.agreement_task_count} agreement copies")
    run_server(store, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parareview",
                                     description="Focused review generation toolkit")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for stochastic stages (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    review = sub.add_parser("review", help="generate a focused review for one paragraph")
    review.add_argument("--paragraph-file", required=True)
    review.add_argument("--paper-corpus", default="",
                        help="corpus manifest JSON or a single .txt document")
    review.add_argument("--config", default="")
    review.add_argument("--out", default="")
    review.add_argument("--variant", choices=["full", "gpt4", "cove", "no_rerank"], default="")
    review.add_argument("--mock-script", default="",
                        help="script file forcing the mock chat backend")
    review.set_defaults(func=_cmd_review)

    rerank = sub.add_parser("rerank", help="plan scorer training and scoring")
    rerank_sub = rerank.add_subparsers(dest="subcommand", required=True)

    rr_train = rerank_sub.add_parser("train")
    rr_train.add_argument("--corpus", default="", help="quadruple JSONL file")
    rr_train.add_argument("--synthetic", type=int, default=0,
                          help="train on N generated paragraphs instead of a corpus")
    rr_train.add_argument("--out-model", required=True)
    rr_train.add_argument("--learning-rate", type=float, default=None)
    rr_train.add_argument("--max-epochs", type=int, default=None)
    rr_train.set_defaults(func=_cmd_rerank_train)

    rr_score = rerank_sub.add_parser("score")
    rr_score.add_argument("--model", required=True)
    rr_score.add_argument("--paragraph-file", required=True)
    rr_score.add_argument("--plans-file", required=True,
                          help="JSON list of candidate plan texts")
    rr_score.set_defaults(func=_cmd_rerank_score)

    rr_eval = rerank_sub.add_parser("eval")
    rr_eval.add_argument("--model", required=True)
    rr_eval.add_argument("--corpus", required=True)
    rr_eval.set_defaults(func=_cmd_rerank_eval)

    dataset = sub.add_parser("dataset", help="paragraph-review dataset compilation")
    dataset_sub = dataset.add_subparsers(dest="subcommand", required=True)
    compile_p = dataset_sub.add_parser("compile")
    compile_p.add_argument("--papers", required=True)
    compile_p.add_argument("--reviews", required=True)
    compile_p.add_argument("--out", required=True)
    compile_p.add_argument("--classifier", default="rule",
                           help="'rule' or base URL of an external classifier")
    compile_p.add_argument("--min-ngram", type=int, default=5)
    compile_p.set_defaults(func=_cmd_dataset_compile)

    ev = sub.add_parser("eval", help="text metrics and comparison analysis")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)

    ev_metrics = ev_sub.add_parser("metrics")
    ev_metrics.add_argument("--pairs", default="",
                            help="JSONL rows with candidate/reference(s)")
    ev_metrics.add_argument("--aspects", default="",
                            help="JSONL rows with predicted/gold labels")
    ev_metrics.set_defaults(func=_cmd_eval_metrics)

    ev_dom = ev_sub.add_parser("dominance")
    ev_dom.add_argument("--judgments", default="")
    ev_dom.add_argument("--matrix", default="",
                        help="pre-aggregated table JSON (systems + cells)")
    ev_dom.add_argument("--raw-doubles", action="store_true",
                        help="count double annotations at full weight")
    ev_dom.set_defaults(func=_cmd_eval_dominance)

    ev_kappa = ev_sub.add_parser("kappa")
    ev_kappa.add_argument("--judgments", required=True)
    ev_kappa.add_argument("--tie-drop-mode", choices=["either", "mutual"], default="either")
    ev_kappa.set_defaults(func=_cmd_eval_kappa)

    annotate = sub.add_parser("annotate", help="human comparison annotation")
    annotate_sub = annotate.add_subparsers(dest="subcommand", required=True)
    serve = annotate_sub.add_parser("serve")
    serve.add_argument("--session-file", required=True)
    serve.add_argument("--journal", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    serve.add_argument("--ui-dir", default="")
    serve.set_defaults(func=_cmd_annotate_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        _log(f"budget exhausted: {exc}")
        return EXIT_BUDGET
    except BackendError as exc:
        _log(f"backend failure: {exc}")
        return EXIT_BACKEND
    except (NoValidPlan, ControllerFailure, ReviewParseFailure,
            QuoteNotInParagraph, DivergenceDetected) as exc:
        _log(f"pipeline failure: {exc.__class__.__name__}: {exc}")
        return EXIT_PIPELINE
    except (ds.ExternalClassifierUnavailable, mx.DuplicateJudgment,
            mx.DegenerateDistribution, mx.LengthMismatch, mx.EmptyCandidate,
            annot.MissingReview, annot.RosterTooSmall, json.JSONDecodeError,
            KeyError, FileNotFoundError) as exc:
        _log(f"data error: {exc.__class__.__name__}: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
