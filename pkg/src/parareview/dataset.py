"""Paragraph-review dataset compilation.

Three stages: quote-match extraction links a review sentence to the unique
paragraph it quotes; a communicative-purpose filter keeps only sentences
that point out weaknesses or request changes; an aspect filter keeps the
five in-scope aspects. The bundled classifiers are rule-based lexicon
baselines meant for tests and plumbing, not faithful models; a fine-tuned
classifier plugs in through the HTTP handle.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .aspects import IN_SCOPE_ASPECTS, Aspect, parse_aspect

log = logging.getLogger(__name__)


class CommunicativePurpose(Enum):
    RECAP = "Recap"
    STRENGTH = "Strength"
    TODO = "Todo"
    WEAKNESS = "Weakness"
    STRUCTURE = "Structure"
    OTHER = "Other"


ACTIONABLE_PURPOSES = (CommunicativePurpose.WEAKNESS, CommunicativePurpose.TODO)


class ExternalClassifierUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class Datapoint:
    unique_id: str
    paper_id: str
    paragraph: str
    human_review: str
    human_review_aspect: Aspect

    def __post_init__(self):
        for name in ("unique_id", "paper_id", "paragraph", "human_review"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")

    def to_dict(self) -> dict:
        return {
            "unique_id": self.unique_id,
            "paper_id": self.paper_id,
            "paragraph": self.paragraph,
            "human_review": self.human_review,
            "human_review_aspect": self.human_review_aspect.value,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Datapoint":
        return cls(
            unique_id=payload["unique_id"],
            paper_id=payload["paper_id"],
            paragraph=payload["paragraph"],
            human_review=payload["human_review"],
            human_review_aspect=parse_aspect(payload["human_review_aspect"]),
        )


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    paragraphs: tuple[str, ...]


def load_papers(path: str | Path) -> list[PaperRecord]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(payload, dict):
        payload = [payload]
    return [PaperRecord(paper_id=entry["paper_id"],
                        paragraphs=tuple(entry["paragraphs"])) for entry in payload]


def load_reviews(path: str | Path) -> list[dict]:
    """JSONL rows {paper_id, review_sentence}."""
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --------------------------------------------------------------------------
# quote-match extraction

_QUOTE_FOLD = str.maketrans({
    "“": '"', "”": '"', "«": '"', "»": '"',
    "‘": "'", "’": "'",
})

_QUOTED_SPAN = re.compile(r'"([^"]+)"')

_WORD = re.compile(r"\S+")


def _normalize(text: str) -> str:
    return " ".join(text.translate(_QUOTE_FOLD).split()).casefold()


def _tokens(text: str) -> list[str]:
    return _WORD.findall(_normalize(text))


def _quoted_spans(review: str) -> list[str]:
    folded = review.translate(_QUOTE_FOLD)
    return [span.strip() for span in _QUOTED_SPAN.findall(folded) if span.strip()]


def _ngram_set(tokens: Sequence[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


def _paragraphs_with_longest_ngram(review_tokens: list[str],
                                   paragraph_tokens: list[list[str]],
                                   q_min: int) -> set[int]:
    """Indices of paragraphs containing a review n-gram of maximal length >= q_min."""
    max_n = len(review_tokens)
    for n in range(max_n, q_min - 1, -1):
        review_grams = _ngram_set(review_tokens, n)
        matched = {idx for idx, tokens in enumerate(paragraph_tokens)
                   if review_grams & _ngram_set(tokens, n)}
        if matched:
            return matched
    return set()


def extract_pairs(paper: PaperRecord, review_sentences: Sequence[str],
                  q_min: int = 5) -> list[tuple[str, str]]:
    """Link each review sentence to the unique paragraph it quotes.

    A quoted span (text between quotation marks) takes precedence; without
    quote marks the longest shared n-gram of at least q_min tokens is used.
    Sentences whose match lands in zero or in several paragraphs yield no
    pair.
    """
    normalized_paragraphs = [_normalize(p) for p in paper.paragraphs]
    paragraph_tokens = [_tokens(p) for p in paper.paragraphs]
    pairs = []
    for review in review_sentences:
        spans = _quoted_spans(review)
        if spans:
            matched = {idx for span in spans
                       for idx, para in enumerate(normalized_paragraphs)
                       if _normalize(span) in para}
        else:
            matched = _paragraphs_with_longest_ngram(_tokens(review),
                                                     paragraph_tokens, q_min)
        if len(matched) == 1:
            pairs.append((paper.paragraphs[matched.pop()], review))
        elif len(matched) > 1:
            log.info("review matched %d paragraphs; dropped as ambiguous: %.60r",
                     len(matched), review)
    return pairs


# --------------------------------------------------------------------------
# classifiers


class ClassifierHandle(Protocol):
    def classify(self, text: str) -> str: ...


_HEADER = re.compile(r"^\s*(pros?|cons?|strengths?|weaknesses?|minor (comments?|points?)|"
                     r"summary|overall)\s*[:.\-]", re.I)

# cue lexicons for the rule-based stand-ins; first matching purpose wins
_PURPOSE_CUES: list[tuple[CommunicativePurpose, tuple[str, ...]]] = [
    (CommunicativePurpose.WEAKNESS, (
        "lacks", "lacking", "fails to", "fail to", "failed to", "missing", "omits",
        "not clear", "unclear", "is not fair", "does not provide", "no evidence",
        "not supported", "insufficient", "is not justified", "questionable",
        "overstates", "not convincing", "limited", "incremental",
    )),
    (CommunicativePurpose.TODO, (
        "should", "would help", "would be useful", "would be better", "needs to",
        "need to", "must be", "consider adding", "please", "it would be",
        "could be improved", "provide more", "clarify", "we recommend", "suggest",
    )),
    (CommunicativePurpose.STRENGTH, (
        "excellent", "thorough", "well written", "well-written", "impressive",
        "convincing", "strong results", "clearly presented", "well motivated",
        "interesting", "solid", "novel and", "i like", "good job", "nicely",
    )),
    (CommunicativePurpose.RECAP, (
        "paper presents", "paper proposes", "paper describes", "paper introduces",
        "authors propose", "authors present", "authors introduce", "work introduces",
        "this work presents", "summarizes", "the paper studies",
    )),
]


class RuleBasedPurposeClassifier:
    """Lexicon stand-in for an actionability classifier; a test fixture, not a model."""

    def classify(self, text: str) -> str:
        lowered = " ".join(text.split()).casefold()
        if _HEADER.match(text):
            return CommunicativePurpose.STRUCTURE.value
        for purpose, cues in _PURPOSE_CUES:
            if any(cue in lowered for cue in cues):
                return purpose.value
        return CommunicativePurpose.OTHER.value


# first matching aspect wins; anything actionable but unmatched is Substance
_ASPECT_CUES: list[tuple[Aspect, tuple[str, ...]]] = [
    (Aspect.REPLICABILITY, (
        "reproduc", "replica", "hyperparameter", "random seed", "code release",
        "code available", "implementation detail", "experimental setup",
    )),
    (Aspect.MEANINGFUL_COMPARISON, (
        "baseline", "compar", "state-of-the-art", "state of the art",
        "related methods", "against other", "prior systems",
    )),
    (Aspect.ORIGINALITY, (
        "novel", "original", "incremental", "already been explored", "not new",
        "similar ideas", "prior work has", "well known",
    )),
    (Aspect.SOUNDNESS, (
        "statistical", "significan", "proof", "theorem", "assumption", "unsound",
        "soundness", "evidence", "justif", "rigor", "flaw",
    )),
    (Aspect.CLARITY, (
        "not clear", "unclear", "confusing", "hard to follow", "clarity",
        "ambiguous", "difficult to understand", "hard to read",
    )),
    (Aspect.MOTIVATION, (
        "motivat", "why this problem", "importance of the problem",
    )),
    (Aspect.SUMMARY, (
        "summar",
    )),
]


class RuleBasedAspectClassifier:
    """Lexicon stand-in for the aspect classifier; a test fixture, not a model."""

    def classify(self, text: str) -> str:
        lowered = " ".join(text.split()).casefold()
        for aspect, cues in _ASPECT_CUES:
            if any(cue in lowered for cue in cues):
                return aspect.value
        return Aspect.SUBSTANCE.value


class ExternalClassifier:
    """HTTP handle: POST {text} -> {label}. Wire format is the enum value string."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url
        self.timeout = timeout

    def classify(self, text: str) -> str:
        try:
            resp = requests.post(self.base_url, json={"text": text}, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise ExternalClassifierUnavailable(str(exc)) from exc
        if resp.status_code >= 400:
            raise ExternalClassifierUnavailable(f"classifier returned {resp.status_code}")
        try:
            return resp.json()["label"]
        except (KeyError, ValueError) as exc:
            raise ExternalClassifierUnavailable(f"malformed response: {exc}") from exc


def classify_purpose(review: str, handle: ClassifierHandle) -> CommunicativePurpose:
    return CommunicativePurpose(handle.classify(review))


def classify_aspect(review: str, handle: ClassifierHandle) -> Aspect:
    return parse_aspect(handle.classify(review))


# --------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class StageCounts:
    extracted: int
    purpose_kept: int
    aspect_kept: int


def stable_unique_id(paper_id: str, review: str) -> str:
    digest = hashlib.sha256(f"{paper_id}\x00{review}".encode("utf-8")).hexdigest()
    return f"dp-{digest[:16]}"


def compile_datapoints(papers: Sequence[PaperRecord], reviews: Sequence[dict],
                       purpose_handle: ClassifierHandle | None = None,
                       aspect_handle: ClassifierHandle | None = None,
                       q_min: int = 5) -> tuple[list[Datapoint], StageCounts]:
    """Run the extraction and filter cascade over a paper+review corpus.

    Per-record classifier failures are logged and that record skipped;
    output order follows input order.
    """
    purpose_handle = purpose_handle or RuleBasedPurposeClassifier()
    aspect_handle = aspect_handle or RuleBasedAspectClassifier()

    extracted: list[tuple[str, str, str]] = []  # (paper_id, paragraph, review)
    for paper in papers:
        sentences = [row["review_sentence"] for row in reviews
                     if row["paper_id"] == paper.paper_id]
        for paragraph, review in extract_pairs(paper, sentences, q_min=q_min):
            extracted.append((paper.paper_id, paragraph, review))

    purpose_kept: list[tuple[str, str, str]] = []
    for paper_id, paragraph, review in extracted:
        try:
            purpose = classify_purpose(review, purpose_handle)
        except Exception as exc:
            log.warning("purpose classification failed for %.60r: %s", review, exc)
            continue
        if purpose in ACTIONABLE_PURPOSES:
            purpose_kept.append((paper_id, paragraph, review))

    datapoints: list[Datapoint] = []
    for paper_id, paragraph, review in purpose_kept:
        try:
            aspect = classify_aspect(review, aspect_handle)
        except Exception as exc:
            log.warning("aspect classification failed for %.60r: %s", review, exc)
            continue
        if aspect in IN_SCOPE_ASPECTS:
            datapoints.append(Datapoint(
                unique_id=stable_unique_id(paper_id, review),
                paper_id=paper_id,
                paragraph=paragraph,
                human_review=review,
                human_review_aspect=aspect,
            ))

    counts = StageCounts(extracted=len(extracted), purpose_kept=len(purpose_kept),
                         aspect_kept=len(datapoints))
    log.info("compiled datapoints: %s", counts)
    return datapoints, counts


def save_datapoints(datapoints: Sequence[Datapoint], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for dp in datapoints:
            fh.write(json.dumps(dp.to_dict(), sort_keys=True) + "\n")


def load_datapoints(path: str | Path) -> list[Datapoint]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Datapoint.from_dict(json.loads(line)))
    return out
