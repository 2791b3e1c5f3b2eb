"""Review aspect vocabulary shared by the pipeline, dataset and re-ranker."""

from __future__ import annotations

from enum import Enum


class Aspect(Enum):
    """Weakness/feedback facet a review sentence addresses.

    The first five values are the ones the pipeline generates feedback for;
    the remaining three only occur during dataset filtering, where reviews
    carrying them are dropped.
    """

    REPLICABILITY = "Replicability"
    ORIGINALITY = "Originality"
    SOUNDNESS = "Empirical and Theoretical Soundness"
    MEANINGFUL_COMPARISON = "Meaningful Comparison"
    SUBSTANCE = "Substance"
    SUMMARY = "Summary"
    CLARITY = "Clarity"
    MOTIVATION = "Motivation"


IN_SCOPE_ASPECTS = (
    Aspect.REPLICABILITY,
    Aspect.ORIGINALITY,
    Aspect.SOUNDNESS,
    Aspect.MEANINGFUL_COMPARISON,
    Aspect.SUBSTANCE,
)

_ALIASES = {
    "replicability": Aspect.REPLICABILITY,
    "originality": Aspect.ORIGINALITY,
    "empirical and theoretical soundness": Aspect.SOUNDNESS,
    "soundness": Aspect.SOUNDNESS,
    "meaningful comparison": Aspect.MEANINGFUL_COMPARISON,
    "substance": Aspect.SUBSTANCE,
    "summary": Aspect.SUMMARY,
    "clarity": Aspect.CLARITY,
    "motivation": Aspect.MOTIVATION,
}


def parse_aspect(label: str) -> Aspect:
    """Map a label string (e.g. from model output) to an Aspect.

    Matching is case-insensitive and tolerant of surrounding whitespace.
    Raises ValueError for unknown labels.
    """
    key = label.strip().lower()
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown aspect label: {label!r}") from None
