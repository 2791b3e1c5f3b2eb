"""Automatic text metrics and human-evaluation statistics.

Text metrics accept raw strings (split on whitespace after casefolding) or
pre-tokenized token lists, and return values in [0, 1]. The
human-evaluation side consumes pairwise comparison judgments: dominance
tables accumulate wins (+1) and ties (+0.5) into a loser-row by
winner-column matrix, and Cohen's kappa measures annotator agreement.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .aspects import Aspect, parse_aspect


class EmptyCandidate(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class DuplicateJudgment(ValueError):
    pass


class DegenerateDistribution(ValueError):
    pass


# --------------------------------------------------------------------------
# text metrics


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_tokens(text_or_tokens: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(text_or_tokens, str):
        return tuple(text_or_tokens.casefold().split())
    return tuple(text_or_tokens)


def bleu4(candidate: str | Sequence[str],
          references: str | Sequence[str] | Sequence[Sequence[str]],
          max_n: int = 4, smoothing: bool = True, epsilon: float = 1e-9) -> float:
    """Sentence BLEU: modified n-gram precisions, geometric mean, brevity penalty.

    With smoothing on, a zero clipped count for some order contributes an
    epsilon numerator instead; with smoothing off any zero precision makes
    the score 0.
    """
    candidate = _as_tokens(candidate)
    if isinstance(references, str):
        references = [references]
    references = [_as_tokens(ref) for ref in references]
    if not candidate:
        raise EmptyCandidate("candidate token list is empty")
    if not references or not any(references):
        raise ValueError("at least one non-empty reference required")

    log_precisions = []
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            if not smoothing:
                return 0.0
            log_precisions.append(math.log(epsilon))
            continue
        max_ref_counts: Counter = Counter()
        for ref in references:
            for gram, count in _ngram_counts(ref, n).items():
                if count > max_ref_counts[gram]:
                    max_ref_counts[gram] = count
        clipped = sum(min(count, max_ref_counts[gram])
                      for gram, count in cand_counts.items())
        if clipped == 0:
            if not smoothing:
                return 0.0
            log_precisions.append(math.log(epsilon / total))
        else:
            log_precisions.append(math.log(clipped / total))

    c = len(candidate)
    # closest reference length; ties resolved toward the shorter reference
    r = min((len(ref) for ref in references), key=lambda rl: (abs(rl - c), rl))
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(sum(log_precisions) / max_n)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str]) -> float:
    """LCS-based F1 between candidate and reference token lists."""
    candidate = _as_tokens(candidate)
    reference = _as_tokens(reference)
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


_STEM_SUFFIXES = ("ing", "ed", "es", "s")


def _stem(token: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if len(token) > len(suffix) + 2 and token.endswith(suffix):
            return token[: -len(suffix)]
    return token


def meteor_simplified(candidate: str | Sequence[str],
                      reference: str | Sequence[str]) -> float:
    """Surface METEOR variant: exact then stem unigram matches, no synonyms.

    Fmean weights recall 9:1; the fragmentation penalty is
    0.5 * (chunks / matches)^3.
    """
    candidate = _as_tokens(candidate)
    reference = _as_tokens(reference)
    if not candidate or not reference:
        return 0.0

    matched_ref: set[int] = set()
    alignment: list[tuple[int, int]] = []
    for stage in ("exact", "stem"):
        for ci, token in enumerate(candidate):
            if any(pair[0] == ci for pair in alignment):
                continue
            for ri, ref_token in enumerate(reference):
                if ri in matched_ref:
                    continue
                same = token == ref_token if stage == "exact" else _stem(token) == _stem(ref_token)
                if same:
                    alignment.append((ci, ri))
                    matched_ref.add(ri)
                    break
    if not alignment:
        return 0.0

    m = len(alignment)
    precision = m / len(candidate)
    recall = m / len(reference)
    fmean = 10 * precision * recall / (recall + 9 * precision)

    alignment.sort()
    chunks = 1
    for (c_prev, r_prev), (c_cur, r_cur) in zip(alignment, alignment[1:]):
        if c_cur != c_prev + 1 or r_cur != r_prev + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1.0 - penalty)


@dataclass(frozen=True)
class AspectReport:
    accuracy: float
    f1: dict[Aspect, float]
    zero_support: tuple[Aspect, ...]  # classes where F1 is 0/0, reported as 0


def aspect_scores(predictions: Sequence[Aspect | str],
                  golds: Sequence[Aspect | str]) -> AspectReport:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        raise ValueError("empty label lists")
    preds = [p if isinstance(p, Aspect) else parse_aspect(p) for p in predictions]
    gold = [g if isinstance(g, Aspect) else parse_aspect(g) for g in golds]

    accuracy = sum(p == g for p, g in zip(preds, gold)) / len(gold)
    f1: dict[Aspect, float] = {}
    zero_support = []
    for label in sorted(set(preds) | set(gold), key=lambda a: a.value):
        tp = sum(p == label and g == label for p, g in zip(preds, gold))
        fp = sum(p == label and g != label for p, g in zip(preds, gold))
        fn = sum(p != label and g == label for p, g in zip(preds, gold))
        if tp == 0 and fp == 0 and fn == 0:
            f1[label] = 0.0
            zero_support.append(label)
        else:
            f1[label] = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return AspectReport(accuracy=accuracy, f1=f1, zero_support=tuple(zero_support))


# --------------------------------------------------------------------------
# pairwise judgments


class Criterion(Enum):
    SPECIFICITY = "Specificity"
    READING_COMPREHENSION = "ReadingComprehension"
    HELPFULNESS = "Helpfulness"


class Outcome(Enum):
    A_WINS = "AWins"
    B_WINS = "BWins"
    TIE = "Tie"


class PresentationOrder(Enum):
    AB = "AB"
    BA = "BA"


@dataclass(frozen=True)
class ComparisonJudgment:
    example_id: str
    criterion: Criterion
    system_a: str
    system_b: str
    outcome: Outcome  # refers to canonical (a, b) order, not screen order
    annotator_id: str
    presentation_order: PresentationOrder = PresentationOrder.AB

    def __post_init__(self):
        if self.system_a == self.system_b:
            raise ValueError("system_a and system_b must differ")

    @property
    def pair(self) -> frozenset:
        return frozenset((self.system_a, self.system_b))

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "criterion": self.criterion.value,
            "system_a": self.system_a,
            "system_b": self.system_b,
            "outcome": self.outcome.value,
            "annotator_id": self.annotator_id,
            "presentation_order": self.presentation_order.value,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ComparisonJudgment":
        return cls(
            example_id=payload["example_id"],
            criterion=Criterion(payload["criterion"]),
            system_a=payload["system_a"],
            system_b=payload["system_b"],
            outcome=Outcome(payload["outcome"]),
            annotator_id=payload["annotator_id"],
            presentation_order=PresentationOrder(payload.get("presentation_order", "AB")),
        )


def save_judgments(judgments: Iterable[ComparisonJudgment], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for judgment in judgments:
            fh.write(json.dumps(judgment.to_dict(), sort_keys=True) + "\n")


def load_judgments(path: str | Path) -> list[ComparisonJudgment]:
    judgments = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                judgments.append(ComparisonJudgment.from_dict(json.loads(line)))
    return judgments


# --------------------------------------------------------------------------
# dominance tables


@dataclass
class DominanceTable:
    """Loser-row by winner-column accumulation of pairwise outcomes."""

    systems: tuple[str, ...]
    cells: dict[tuple[str, str], float]  # (loser_row, winner_col) -> mass

    @property
    def totals(self) -> dict[str, float]:
        return {s: sum(self.cells.get((row, s), 0.0) for row in self.systems)
                for s in self.systems}

    @property
    def total_mass(self) -> float:
        return sum(self.cells.values())

    @classmethod
    def from_cells(cls, systems: Sequence[str],
                   cells: dict[tuple[str, str], float]) -> "DominanceTable":
        for (row, col) in cells:
            if row == col:
                raise ValueError("diagonal cells are undefined")
        return cls(systems=tuple(systems), cells=dict(cells))

    def to_dict(self) -> dict:
        return {
            "systems": list(self.systems),
            "cells": {f"{row}|{col}": mass for (row, col), mass in sorted(self.cells.items())},
            "totals": self.totals,
        }


def _judgment_masses(judgment: ComparisonJudgment) -> dict[tuple[str, str], float]:
    a, b = judgment.system_a, judgment.system_b
    if judgment.outcome is Outcome.A_WINS:
        return {(b, a): 1.0}
    if judgment.outcome is Outcome.B_WINS:
        return {(a, b): 1.0}
    return {(b, a): 0.5, (a, b): 0.5}


def dominance(judgments: Sequence[ComparisonJudgment], criterion: Criterion,
              systems: Sequence[str] | None = None,
              average_doubles: bool = True) -> DominanceTable:
    """Accumulate pairwise outcomes for one criterion into a dominance table.

    When an (example, pair) instance carries several judgments (double
    annotation), their cell masses are averaged so the instance contributes
    total mass 1; pass average_doubles=False to count every judgment with
    full mass instead.
    """
    relevant = [j for j in judgments if j.criterion is criterion]
    seen: set[tuple] = set()
    for judgment in relevant:
        key = (judgment.annotator_id, judgment.example_id, judgment.pair)
        if key in seen:
            raise DuplicateJudgment(
                f"annotator {judgment.annotator_id} judged example "
                f"{judgment.example_id} pair {sorted(judgment.pair)} twice")
        seen.add(key)

    if systems is None:
        ordered: list[str] = []
        for judgment in relevant:
            for system in (judgment.system_a, judgment.system_b):
                if system not in ordered:
                    ordered.append(system)
        systems = ordered

    groups: dict[tuple, list[ComparisonJudgment]] = {}
    for judgment in relevant:
        groups.setdefault((judgment.example_id, judgment.pair), []).append(judgment)

    cells: dict[tuple[str, str], float] = {}
    for group in groups.values():
        scale = 1.0 / len(group) if average_doubles else 1.0
        for judgment in group:
            for cell, mass in _judgment_masses(judgment).items():
                cells[cell] = cells.get(cell, 0.0) + mass * scale
    return DominanceTable(systems=tuple(systems), cells=cells)


def render_dominance_table(table: DominanceTable, title: str = "",
                           decimals: int = 2) -> str:
    """Plain-text table: winner columns, loser rows, and a totals row."""
    width = max([len(s) for s in table.systems] + [8])

    def fmt(value: float) -> str:
        return f"{value:.{decimals}f}".rjust(width)

    lines = []
    if title:
        lines.append(title)
    header = " " * width + " " + " ".join(s.rjust(width) for s in table.systems)
    lines.append(header)
    for row in table.systems:
        cells = []
        for col in table.systems:
            if row == col:
                cells.append("-".rjust(width))
            else:
                cells.append(fmt(table.cells.get((row, col), 0.0)))
        lines.append(row.rjust(width) + " " + " ".join(cells))
    totals = table.totals
    lines.append("Total".rjust(width) + " "
                 + " ".join(fmt(totals[s]) for s in table.systems))
    return "\n".join(lines)


def tie_rate(judgments: Sequence[ComparisonJudgment], criterion: Criterion) -> float:
    relevant = [j for j in judgments if j.criterion is criterion]
    if not relevant:
        raise ValueError(f"no judgments for criterion {criterion.value}")
    ties = sum(j.outcome is Outcome.TIE for j in relevant)
    return 100.0 * ties / len(relevant)


# --------------------------------------------------------------------------
# agreement


def cohen_kappa(labels_a: Sequence, labels_b: Sequence, include_ties: bool = True,
                tie_drop_mode: str = "either") -> float:
    """Cohen's kappa over aligned label lists.

    With include_ties=False, positions involving ties are dropped first:
    mode "either" drops a position when either annotator chose Tie (the
    default), mode "mutual" only when both did.
    """
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} vs {len(labels_b)} labels")
    def is_tie(label) -> bool:
        return label is Outcome.TIE or label == Outcome.TIE.value

    pairs = list(zip(labels_a, labels_b))
    if not include_ties:
        if tie_drop_mode == "either":
            pairs = [(a, b) for a, b in pairs if not is_tie(a) and not is_tie(b)]
        elif tie_drop_mode == "mutual":
            pairs = [(a, b) for a, b in pairs if not (is_tie(a) and is_tie(b))]
        else:
            raise ValueError(f"unknown tie_drop_mode {tie_drop_mode!r}")
    if not pairs:
        raise ValueError("no label pairs left to compare")

    n = len(pairs)
    observed = sum(a == b for a, b in pairs) / n
    counts_a = Counter(a for a, _ in pairs)
    counts_b = Counter(b for _, b in pairs)
    expected = sum(counts_a[label] * counts_b.get(label, 0) for label in counts_a) / (n * n)
    if expected == 1.0:
        raise DegenerateDistribution("expected agreement is 1; kappa undefined")
    return (observed - expected) / (1.0 - expected)


def paired_outcomes(judgments: Sequence[ComparisonJudgment]) -> tuple[list, list]:
    """Align double-annotated instances into two outcome lists for kappa.

    Instances are (example_id, pair, criterion) judged by exactly two
    annotators; the lower annotator id is list A for determinism.
    """
    groups: dict[tuple, list[ComparisonJudgment]] = {}
    for judgment in judgments:
        key = (judgment.example_id, judgment.pair, judgment.criterion)
        groups.setdefault(key, []).append(judgment)

    labels_a, labels_b = [], []
    for key in sorted(groups, key=lambda k: (k[0], sorted(k[1]), k[2].value)):
        group = groups[key]
        if len(group) != 2:
            continue
        first, second = sorted(group, key=lambda j: j.annotator_id)
        labels_a.append(first.outcome)
        labels_b.append(second.outcome)
    return labels_a, labels_b
