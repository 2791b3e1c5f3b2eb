"""Plan scoring and re-ranking.

Training data pairs each paragraph's well-constructed plan against three
deficient ones (wrong-topic questions, unstructured text, generic
questions). The scorer is trained with a pairwise cross-entropy objective
over score differences and applied pointwise at inference: every candidate
gets a score, the argmax wins.

The native scorer is a linear model over hand-designed plan features; an
HTTP scorer handle lets a neural cross-encoder take its place without
touching the training or inference code.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np
import requests

from .backends import BackendError, ChatClient, ChatRequest, EmbeddingClient, TransientBackendError
from .investigator import cosine_similarity
from .plans import ParseError, Plan, parse_plan, render_plan, validate_plan_text
from .plans import TERMINAL_REVIEW_SENTENCE, extract_steps_lenient
from .prompting import PromptLibrary
from .textutil import content_words, jaccard

log = logging.getLogger(__name__)

EXTRACTOR_VERSION = "fx-1"

FEATURE_NAMES = (
    "grammar_fraction",
    "r1_violations",
    "r2_violations",
    "terminal_exact",
    "paper_before_web",
    "question_jaccard",
    "mean_question_cosine",
    "max_question_cosine",
    "plan_length",
    "duplicate_questions",
)


class DivergenceDetected(RuntimeError):
    pass


# --------------------------------------------------------------------------
# training data


@dataclass(frozen=True)
class RankingQuadruple:
    """One training example: the good plan and three deficient ones.

    Plans are stored as raw text because the unstructured variant need not
    parse; the structured variants are parseable by construction.
    """

    paragraph: str
    optimal: str
    lacking_coherence: str
    lacking_structure: str
    lacking_specificity: str
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def negatives(self) -> tuple[str, str, str]:
        return (self.lacking_coherence, self.lacking_structure, self.lacking_specificity)

    def to_dict(self) -> dict:
        return {
            "paragraph": self.paragraph,
            "optimal": self.optimal,
            "lacking_coherence": self.lacking_coherence,
            "lacking_structure": self.lacking_structure,
            "lacking_specificity": self.lacking_specificity,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RankingQuadruple":
        return cls(
            paragraph=payload["paragraph"],
            optimal=payload["optimal"],
            lacking_coherence=payload["lacking_coherence"],
            lacking_structure=payload["lacking_structure"],
            lacking_specificity=payload["lacking_specificity"],
            provenance=payload.get("provenance", {}),
        )


def save_quadruples(quadruples: Sequence[RankingQuadruple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for quad in quadruples:
            fh.write(json.dumps(quad.to_dict(), sort_keys=True) + "\n")


def load_quadruples(path: str | Path) -> list[RankingQuadruple]:
    quadruples = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                quadruples.append(RankingQuadruple.from_dict(json.loads(line)))
    return quadruples


class GenericCommentCatalog:
    """Aspect-keyed generic review sentences used for the specificity axis."""

    def __init__(self, comments: dict[str, str]):
        if not comments:
            raise ValueError("catalog must be non-empty")
        self.comments = dict(comments)

    @classmethod
    def bundled(cls) -> "GenericCommentCatalog":
        from importlib import resources

        path = resources.files("parareview") / "data" / "generic_comments.json"
        return cls(json.loads(path.read_text(encoding="utf-8")))

    def get(self, aspect_label: str) -> str:
        if aspect_label not in self.comments:
            raise KeyError(f"no generic comment for aspect {aspect_label!r}")
        return self.comments[aspect_label]


def _structured_plan(chat: ChatClient, prompts: PromptLibrary, paragraph: str,
                     review: str) -> str:
    template = prompts.load("plan_struct")
    request = ChatRequest(system_message=template.system,
                          user_message=template.fill_user(
                              {"paragraph": paragraph, "review": review}),
                          temperature=0.7, tag="plan_struct")
    text = chat.generate(request)
    try:
        parse_plan(text)
        return text
    except ParseError:
        log.info("structured plan did not parse; retrying once")
    text = chat.generate(request)
    parse_plan(text)
    return text


def generate_quadruple(paragraph: str, gold_review: str,
                       sample_foreign: Callable[[], tuple[str, str]],
                       struct_chat: ChatClient, unstruct_chat: ChatClient,
                       prompts: PromptLibrary, catalog: GenericCommentCatalog,
                       aspect_label: str) -> RankingQuadruple:
    """Build the four plans for one paragraph.

    The optimal plan targets the gold review; coherence breaks by targeting
    a foreign paragraph's review; structure breaks by skipping the plan
    format instructions; specificity breaks by targeting a generic comment
    for the review's aspect.
    """
    foreign_paragraph, foreign_review = sample_foreign()
    if foreign_review == gold_review:
        raise ValueError("foreign review must differ from the gold review")
    generic_review = catalog.get(aspect_label)

    optimal = _structured_plan(struct_chat, prompts, paragraph, gold_review)
    lacking_coherence = _structured_plan(struct_chat, prompts, paragraph, foreign_review)
    unstruct_template = prompts.load("plan_unstruct")
    lacking_structure = unstruct_chat.generate(ChatRequest(
        system_message=unstruct_template.system or "You are a helpful assistant.",
        user_message=unstruct_template.fill_user(
            {"paragraph": paragraph, "review": gold_review}),
        temperature=0.7, tag="plan_unstruct"))
    lacking_specificity = _structured_plan(struct_chat, prompts, paragraph, generic_review)

    return RankingQuadruple(
        paragraph=paragraph,
        optimal=optimal,
        lacking_coherence=lacking_coherence,
        lacking_structure=lacking_structure,
        lacking_specificity=lacking_specificity,
        provenance={"gold_review": gold_review, "foreign_review": foreign_review,
                    "foreign_paragraph": foreign_paragraph,
                    "generic_review": generic_review},
    )


# --------------------------------------------------------------------------
# features


class FeatureExtractor:
    """Fixed-order plan features; the embedder is optional (cosines become 0)."""

    names = FEATURE_NAMES
    version = EXTRACTOR_VERSION

    def __init__(self, embedder: EmbeddingClient | None = None):
        self.embedder = embedder

    def extract(self, paragraph: str, plan_text: str) -> np.ndarray:
        line_count, steps = extract_steps_lenient(plan_text)
        report = validate_plan_text(plan_text)
        questions = [s.question for s in steps if s.question]

        grammar_fraction = len(steps) / line_count if line_count else 0.0
        r1 = len(report.by_rule("R1"))
        r2 = len(report.by_rule("R2a")) + len(report.by_rule("R2c"))
        last_line = next((ln.strip() for ln in reversed(plan_text.splitlines())
                          if ln.strip()), "")
        if "." in last_line and last_line.split(".", 1)[0].strip().isdigit():
            last_line = last_line.split(".", 1)[1].strip()
        terminal_exact = 1.0 if last_line == TERMINAL_REVIEW_SENTENCE else 0.0
        paper_before_web = 1.0 if steps and not report.by_rule("R2a") else 0.0

        paragraph_words = content_words(paragraph)
        question_words = content_words(" ".join(questions))
        overlap = jaccard(question_words, paragraph_words)

        mean_cos, max_cos = 0.0, 0.0
        if questions and self.embedder is not None:
            paragraph_vec = self.embedder.embed(paragraph)
            sims = [cosine_similarity(self.embedder.embed(q), paragraph_vec)
                    for q in questions]
            mean_cos, max_cos = float(np.mean(sims)), float(max(sims))

        normalized = [" ".join(q.casefold().split()) for q in questions]
        duplicates = len(normalized) - len(set(normalized))

        return np.array([
            grammar_fraction, float(r1), float(r2), terminal_exact,
            paper_before_web, overlap, mean_cos, max_cos,
            float(line_count), float(duplicates),
        ])


# --------------------------------------------------------------------------
# scoring models


class Scorer(Protocol):
    def score(self, paragraph: str, plan_text: str) -> float: ...


@dataclass
class TrainingReport:
    epoch_losses: list[float] = field(default_factory=list)
    holdout_recall: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


@dataclass
class ScoringModel:
    feature_names: tuple[str, ...]
    weights: tuple[float, ...]
    bias: float = 0.0
    extractor_version: str = EXTRACTOR_VERSION
    extractor: FeatureExtractor | None = field(default=None, compare=False, repr=False)
    report: TrainingReport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.feature_names) != len(self.weights):
            raise ValueError("one weight per feature required")

    @classmethod
    def zeros(cls, extractor: FeatureExtractor | None = None) -> "ScoringModel":
        return cls(feature_names=FEATURE_NAMES, weights=(0.0,) * len(FEATURE_NAMES),
                   extractor=extractor)

    def _extractor(self) -> FeatureExtractor:
        return self.extractor if self.extractor is not None else FeatureExtractor()

    def score_features(self, features: np.ndarray) -> float:
        return float(np.dot(np.asarray(self.weights), features) + self.bias)

    def score(self, paragraph: str, plan_text: str) -> float:
        return self.score_features(self._extractor().extract(paragraph, plan_text))

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": list(self.weights),
            "bias": self.bias,
            "extractor_version": self.extractor_version,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def from_dict(cls, payload: dict,
                  extractor: FeatureExtractor | None = None) -> "ScoringModel":
        model = cls(feature_names=tuple(payload["feature_names"]),
                    weights=tuple(float(w) for w in payload["weights"]),
                    bias=float(payload["bias"]),
                    extractor_version=payload["extractor_version"],
                    extractor=extractor)
        if model.extractor_version != EXTRACTOR_VERSION:
            log.warning("model extractor version %s differs from current %s",
                        model.extractor_version, EXTRACTOR_VERSION)
        return model

    @classmethod
    def load(cls, path: str | Path,
             extractor: FeatureExtractor | None = None) -> "ScoringModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")),
                             extractor=extractor)


class ExternalScorer:
    """HTTP scorer: POST {paragraph, plan} -> {score}."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url
        self.timeout = timeout

    def score(self, paragraph: str, plan_text: str) -> float:
        try:
            resp = requests.post(self.base_url,
                                 json={"paragraph": paragraph, "plan": plan_text},
                                 timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(str(exc)) from exc
        if resp.status_code >= 400:
            raise BackendError(f"scorer returned {resp.status_code}")
        return float(resp.json()["score"])


# --------------------------------------------------------------------------
# loss and training


def _sigmoid(x: float | np.ndarray):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def pairwise_prob(model: ScoringModel, paragraph: str, plan_i: str, plan_j: str) -> float:
    """P(plan_i ranks above plan_j) as the sigmoid of the score difference."""
    diff = model.score(paragraph, plan_i) - model.score(paragraph, plan_j)
    return float(_sigmoid(diff))


@dataclass(frozen=True)
class QuadrupleFeatures:
    positive: np.ndarray
    negatives: tuple[np.ndarray, ...]


def featurize_corpus(quadruples: Sequence[RankingQuadruple],
                     extractor: FeatureExtractor) -> list[QuadrupleFeatures]:
    out = []
    for quad in quadruples:
        out.append(QuadrupleFeatures(
            positive=extractor.extract(quad.paragraph, quad.optimal),
            negatives=tuple(extractor.extract(quad.paragraph, neg)
                            for neg in quad.negatives),
        ))
    return out


def _pair_diffs(weights: np.ndarray, bias: float,
                features: Sequence[QuadrupleFeatures]) -> np.ndarray:
    diffs = []
    for quad in features:
        for neg in quad.negatives:
            # bias cancels in the difference
            diffs.append(float(np.dot(weights, quad.positive - neg)))
    return np.array(diffs)


def ranking_loss_features(weights: np.ndarray, bias: float,
                          features: Sequence[QuadrupleFeatures]) -> float:
    """Sum over pairs of -[log P(pos > neg) + log(1 - P(neg > pos))].

    With the sigmoid-of-difference probability the two terms are equal, so
    each pair contributes 2 * softplus(-diff); both terms are kept explicit
    in this formula's docstring form but computed via the stable identity.
    """
    diffs = _pair_diffs(weights, bias, features)
    if diffs.size == 0:
        return 0.0
    return float(np.sum(2.0 * np.logaddexp(0.0, -diffs)))


def ranking_loss(model: ScoringModel, quadruples: Sequence[RankingQuadruple]) -> float:
    features = featurize_corpus(quadruples, model._extractor())
    return ranking_loss_features(np.asarray(model.weights), model.bias, features)


def ranking_loss_gradient(weights: np.ndarray, bias: float,
                          features: Sequence[QuadrupleFeatures]) -> np.ndarray:
    """Analytic gradient wrt weights; the bias gradient is identically zero."""
    grad = np.zeros_like(weights)
    for quad in features:
        for neg in quad.negatives:
            delta = quad.positive - neg
            diff = float(np.dot(weights, delta))
            grad += -2.0 * float(_sigmoid(-diff)) * delta
    return grad


@dataclass(frozen=True)
class TrainConfig:
    # 1e-2 suits the native linear model; encoder fine-tuning rates
    # (e.g. 5e-06) belong to the external-scorer path, not here.
    learning_rate: float = 1e-2
    batch_size: int = 8
    max_epochs: int = 10
    patience: int = 3
    holdout_fraction: float = 0.1
    weight_decay: float = 0.0
    seed: int = 13


def train(quadruples: Sequence[RankingQuadruple], config: TrainConfig = TrainConfig(),
          extractor: FeatureExtractor | None = None) -> ScoringModel:
    """Mini-batch gradient descent on the pairwise loss.

    Features are standardized for optimization and the affine transform is
    folded back into the returned weights, so the saved model applies to
    raw features. Early stopping tracks recall@1 on a held-out split.
    """
    if not quadruples:
        raise ValueError("training corpus is empty")
    extractor = extractor or FeatureExtractor()
    features = featurize_corpus(quadruples, extractor)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(features))
    n_holdout = max(1, int(round(len(features) * config.holdout_fraction))) \
        if len(features) > 1 else 0
    holdout = [features[i] for i in order[:n_holdout]]
    training = [features[i] for i in order[n_holdout:]]

    all_rows = np.vstack([quad.positive for quad in features]
                         + [neg for quad in features for neg in quad.negatives])
    mean = all_rows.mean(axis=0)
    std = all_rows.std(axis=0)
    std[std == 0.0] = 1.0

    def standardize(quads: Sequence[QuadrupleFeatures]) -> list[QuadrupleFeatures]:
        return [QuadrupleFeatures(
            positive=(q.positive - mean) / std,
            negatives=tuple((n - mean) / std for n in q.negatives)) for q in quads]

    std_train = standardize(training)
    std_holdout = standardize(holdout)

    dim = len(FEATURE_NAMES)
    weights = np.zeros(dim)
    report = TrainingReport()
    best_weights = weights.copy()
    best_recall = _recall_features(weights, std_holdout) if std_holdout else 0.0
    best_loss = ranking_loss_features(weights, 0.0, std_train)
    epochs_since_best = 0

    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(std_train))
        for start in range(0, len(perm), config.batch_size):
            batch = [std_train[i] for i in perm[start:start + config.batch_size]]
            grad = ranking_loss_gradient(weights, 0.0, batch)
            if config.weight_decay:
                grad = grad + config.weight_decay * weights
            weights = weights - config.learning_rate * grad
        epoch_loss = ranking_loss_features(weights, 0.0, std_train)
        if not np.isfinite(epoch_loss):
            raise DivergenceDetected(f"non-finite loss at epoch {epoch + 1}")
        report.epoch_losses.append(epoch_loss)

        recall = _recall_features(weights, std_holdout) if std_holdout else 1.0
        report.holdout_recall.append(recall)
        improved = recall > best_recall or (recall == best_recall and epoch_loss < best_loss)
        if improved:
            best_weights = weights.copy()
            best_recall, best_loss = recall, epoch_loss
            report.best_epoch = epoch + 1
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                report.stopped_early = True
                break

    folded_weights = best_weights / std
    folded_bias = -float(np.dot(best_weights, mean / std))
    return ScoringModel(feature_names=FEATURE_NAMES,
                        weights=tuple(float(w) for w in folded_weights),
                        bias=folded_bias, extractor=extractor, report=report)


def _recall_features(weights: np.ndarray, features: Sequence[QuadrupleFeatures]) -> float:
    if not features:
        return 0.0
    hits = 0
    for quad in features:
        pos = float(np.dot(weights, quad.positive))
        neg_best = max(float(np.dot(weights, neg)) for neg in quad.negatives)
        if pos > neg_best:
            hits += 1
    return hits / len(features)


# --------------------------------------------------------------------------
# inference


def select_best(scorer: Scorer, paragraph: str,
                plans: Sequence[Plan | str]) -> tuple[Plan | str, list[float]]:
    """Pointwise argmax over candidate scores; first index wins ties."""
    if not plans:
        raise ValueError("no candidate plans")
    texts = [render_plan(p) if isinstance(p, Plan) else p for p in plans]
    scores = [scorer.score(paragraph, text) for text in texts]
    best = int(np.argmax(scores))
    return plans[best], scores


def recall_at_1(scorer: Scorer, quadruples: Sequence[RankingQuadruple]) -> float:
    """Fraction of quadruples whose optimal plan strictly outranks all three others."""
    if not quadruples:
        raise ValueError("no quadruples to evaluate")
    hits = 0
    for quad in quadruples:
        pos = scorer.score(quad.paragraph, quad.optimal)
        if all(pos > scorer.score(quad.paragraph, neg) for neg in quad.negatives):
            hits += 1
    return hits / len(quadruples)
