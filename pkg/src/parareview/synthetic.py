"""Synthetic ranking corpora with controllable difficulty.

Two generators: a separable corpus where the optimal plan is identifiable
from plan-quality features alone (used to verify the training loop), and a
balanced corpus where the four candidates are drawn i.i.d. from the same
distribution, so any fixed scorer picks the "optimal" slot about a quarter
of the time.
"""

from __future__ import annotations

import numpy as np

from .plans import TERMINAL_REVIEW_SENTENCE
from .reranker import FEATURE_NAMES, FeatureExtractor, RankingQuadruple, ScoringModel

_STEMS = (
    "gradient", "kernel", "attention", "protein", "lattice", "spectral",
    "bayesian", "adversarial", "recurrent", "symbolic", "causal", "sparse",
    "manifold", "quantile", "entropy", "contrastive", "diffusion", "graph",
)

_GENERIC_QUESTIONS = (
    "What is the main contribution of the approach?",
    "Are there established baselines for this task?",
    "What datasets are commonly used in this area?",
    "How do similar methods report their results?",
)


def _topic_tokens(rng: np.random.Generator, example_id: int, count: int = 6) -> list[str]:
    stems = rng.choice(len(_STEMS), size=count, replace=False)
    return [f"{_STEMS[int(s)]}{example_id}" for s in stems]


def _paragraph(tokens: list[str]) -> str:
    t = tokens
    return (f"The {t[0]} {t[1]} approach was evaluated on the {t[2]} {t[3]} dataset "
            f"and improved {t[4]} over the {t[5]} baseline without further analysis.")


def _well_formed(paper_questions: list[str], web_questions: list[str]) -> str:
    lines = []
    for q in paper_questions:
        lines.append(f'{len(lines) + 1}. Investigator: Answer question using the paper: "{q}"')
    for q in web_questions:
        lines.append(f'{len(lines) + 1}. Investigator: Answer question using Google: "{q}"')
    lines.append(f"{len(lines) + 1}. {TERMINAL_REVIEW_SENTENCE}")
    return "\n".join(lines)


def make_separable_corpus(n: int, seed: int = 0) -> list[RankingQuadruple]:
    """Quadruples where the optimal plan dominates on grammar and overlap."""
    rng = np.random.default_rng(seed)
    quadruples = []
    for i in range(n):
        tokens = _topic_tokens(rng, i)
        foreign_tokens = _topic_tokens(rng, n + i)
        paragraph = _paragraph(tokens)

        n_paper = int(rng.integers(2, 4))
        optimal = _well_formed(
            [f"What is the {tokens[0]} {tokens[1]} approach?",
             f"What does the {tokens[2]} {tokens[3]} dataset contain?",
             f"How was {tokens[4]} measured against the {tokens[5]} baseline?"][:n_paper],
            [f"How is {tokens[4]} usually evaluated in the literature?"])

        lacking_coherence = _well_formed(
            [f"What is the {foreign_tokens[0]} {foreign_tokens[1]} approach?",
             f"What does the {foreign_tokens[2]} {foreign_tokens[3]} dataset contain?"],
            [f"How is {foreign_tokens[4]} usually evaluated in the literature?"])

        lacking_structure = (
            f"To check this claim I would first look up the {tokens[0]} method in the "
            f"paper, then search the web for how {tokens[4]} is normally reported, and "
            f"finally write the review once that context is gathered.")

        generic = list(rng.choice(len(_GENERIC_QUESTIONS), size=2, replace=False))
        lacking_specificity = _well_formed(
            [_GENERIC_QUESTIONS[int(generic[0])]], [_GENERIC_QUESTIONS[int(generic[1])]])

        quadruples.append(RankingQuadruple(
            paragraph=paragraph, optimal=optimal, lacking_coherence=lacking_coherence,
            lacking_structure=lacking_structure, lacking_specificity=lacking_specificity,
            provenance={"generator": "separable", "example": i}))
    return quadruples


def _random_candidate(rng: np.random.Generator, tokens: list[str], pool: list[str]) -> str:
    """One i.i.d. candidate: random questions, random terminal, random order."""
    n_questions = int(rng.integers(1, 5))
    questions = []
    for _ in range(n_questions):
        k = int(rng.integers(0, 4))
        own = [tokens[int(j)] for j in rng.choice(len(tokens), size=k, replace=False)]
        other = [pool[int(j)] for j in rng.choice(len(pool), size=3 - min(k, 3), replace=False)]
        nonce = f"term{int(rng.integers(0, 10 ** 6))}"
        words = own + other + [nonce]
        questions.append(f"What links {' and '.join(words)} in this setting?")

    sources = ["paper" if rng.random() < 0.5 else "web" for _ in questions]
    lines = []
    for q, src in zip(questions, sources):
        verb = "the paper" if src == "paper" else "Google"
        lines.append(f'{len(lines) + 1}. Investigator: Answer question using {verb}: "{q}"')
    if rng.random() < 0.7:
        lines.append(f"{len(lines) + 1}. {TERMINAL_REVIEW_SENTENCE}")
    else:
        lines.append(f"{len(lines) + 1}. Reviewer: Write a short review of the passage.")
    return "\n".join(lines)


def make_balanced_corpus(n: int, seed: int = 0) -> list[RankingQuadruple]:
    """Quadruples whose four slots are exchangeable draws; no slot is better."""
    rng = np.random.default_rng(seed)
    pool = [f"{stem}pool" for stem in _STEMS]
    quadruples = []
    for i in range(n):
        tokens = _topic_tokens(rng, i)
        paragraph = _paragraph(tokens)
        candidates = [_random_candidate(rng, tokens, pool) for _ in range(4)]
        quadruples.append(RankingQuadruple(
            paragraph=paragraph, optimal=candidates[0], lacking_coherence=candidates[1],
            lacking_structure=candidates[2], lacking_specificity=candidates[3],
            provenance={"generator": "balanced", "example": i}))
    return quadruples


def random_model(seed: int, extractor: FeatureExtractor | None = None) -> ScoringModel:
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal(len(FEATURE_NAMES))
    return ScoringModel(feature_names=FEATURE_NAMES,
                        weights=tuple(float(w) for w in weights),
                        bias=0.0, extractor=extractor)
