"""Blind pairwise-comparison sessions for human evaluation.

A session turns examples (a paragraph plus one review per system) into
comparison tasks: every unordered system pair crossed with every criterion,
assigned to one annotator, with a fraction of examples assigned to a second
annotator for agreement measurement. Reviews are presented in randomized
left/right order fixed at session creation; submitted choices are
de-blinded back into canonical (system_a, system_b) outcomes.

Durability is an append-only JSONL journal replayed on start.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable

from .metrics import ComparisonJudgment, Criterion, Outcome, PresentationOrder

CRITERIA = (Criterion.SPECIFICITY, Criterion.READING_COMPREHENSION, Criterion.HELPFULNESS)

CHOICES = ("Left", "Right", "Tie")


class MissingReview(ValueError):
    pass


class RosterTooSmall(ValueError):
    pass


class UnknownAnnotator(KeyError):
    pass


class UnknownTask(KeyError):
    pass


class AlreadyJudged(ValueError):
    pass


@dataclass(frozen=True)
class ExampleRecord:
    example_id: str
    paragraph: str
    reviews: dict[str, str]  # system id -> review text
    paper_link: str = ""

    @classmethod
    def from_dict(cls, payload: dict) -> "ExampleRecord":
        return cls(example_id=payload["example_id"], paragraph=payload["paragraph"],
                   reviews=dict(payload["reviews"]), paper_link=payload.get("paper_link", ""))


@dataclass(frozen=True)
class Task:
    task_id: str
    example_id: str
    system_a: str  # canonical order: position in the session's system list
    system_b: str
    criterion: Criterion
    annotator_id: str
    presentation_order: PresentationOrder
    is_agreement_copy: bool = False


@dataclass(frozen=True)
class TaskCard:
    """What the annotator sees; carries no system identity anywhere."""

    task_id: str
    paragraph: str
    paper_link: str
    review_left: str
    review_right: str
    criterion: str
    guideline: str

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "paragraph": self.paragraph,
            "paper_link": self.paper_link,
            "review_left": self.review_left,
            "review_right": self.review_right,
            "criterion": self.criterion,
            "guideline": self.guideline,
        }


def default_guidelines() -> dict[str, str]:
    from importlib import resources

    path = resources.files("parareview") / "data" / "criterion_guidelines.json"
    return json.loads(path.read_text(encoding="utf-8"))


def _task_id(session_id: str, example_id: str, system_a: str, system_b: str,
             criterion: Criterion, annotator_id: str) -> str:
    blob = "|".join([session_id, example_id, system_a, system_b, criterion.value,
                     annotator_id])
    return "task-" + hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class EvaluationSession:
    session_id: str
    systems: tuple[str, ...]
    examples: dict[str, ExampleRecord]
    tasks: dict[str, Task]
    assignment: dict[str, list[str]]  # annotator -> ordered task ids
    double_annotation_set: frozenset[str]
    seed: int
    guidelines: dict[str, str] = field(default_factory=default_guidelines)
    judgments: dict[str, ComparisonJudgment] = field(default_factory=dict)  # by task id
    judgment_order: list[str] = field(default_factory=list)

    @property
    def agreement_task_count(self) -> int:
        return sum(task.is_agreement_copy for task in self.tasks.values())

    def card_for(self, task: Task | str) -> TaskCard:
        if isinstance(task, str):
            task = self.tasks[task]
        example = self.examples[task.example_id]
        review_a = example.reviews[task.system_a]
        review_b = example.reviews[task.system_b]
        if task.presentation_order is PresentationOrder.AB:
            left, right = review_a, review_b
        else:
            left, right = review_b, review_a
        return TaskCard(
            task_id=task.task_id,
            paragraph=example.paragraph,
            paper_link=example.paper_link,
            review_left=left,
            review_right=right,
            criterion=task.criterion.value,
            guideline=self.guidelines.get(task.criterion.value, ""),
        )


def create_session(session_id: str, examples: Iterable[ExampleRecord],
                   systems: Iterable[str], annotator_roster: Iterable[str],
                   double_fraction: float = 0.1, seed: int = 0,
                   guidelines: dict[str, str] | None = None) -> EvaluationSession:
    """Deterministically expand examples into assigned comparison tasks."""
    systems = tuple(systems)
    roster = tuple(annotator_roster)
    examples = list(examples)
    if len(systems) < 2:
        raise ValueError("need at least two systems to compare")
    if not roster:
        raise RosterTooSmall("annotator roster is empty")
    if not 0.0 <= double_fraction <= 1.0:
        raise ValueError("double_fraction must be in [0, 1]")
    for example in examples:
        missing = set(systems) - example.reviews.keys()
        if missing:
            raise MissingReview(
                f"example {example.example_id} lacks reviews for {sorted(missing)}")

    n_doubles = round(len(examples) * double_fraction)
    if n_doubles > 0 and len(roster) < 2:
        raise RosterTooSmall("double annotation requires at least two annotators")

    rng = random.Random(seed)
    order = list(range(len(examples)))
    rng.shuffle(order)
    double_ids = frozenset(examples[i].example_id for i in order[:n_doubles])

    # all of an example's tasks go to one annotator; doubles get a second one
    duties: list[tuple[ExampleRecord, str, bool]] = []
    for pos, idx in enumerate(order):
        example = examples[idx]
        primary = roster[pos % len(roster)]
        duties.append((example, primary, False))
        if example.example_id in double_ids:
            secondary = roster[(pos + 1) % len(roster)]
            duties.append((example, secondary, True))

    tasks: dict[str, Task] = {}
    assignment: dict[str, list[str]] = {annotator: [] for annotator in roster}
    for example, annotator, is_copy in duties:
        for system_a, system_b in combinations(systems, 2):
            for criterion in CRITERIA:
                task = Task(
                    task_id=_task_id(session_id, example.example_id, system_a,
                                     system_b, criterion, annotator),
                    example_id=example.example_id,
                    system_a=system_a,
                    system_b=system_b,
                    criterion=criterion,
                    annotator_id=annotator,
                    presentation_order=rng.choice((PresentationOrder.AB,
                                                   PresentationOrder.BA)),
                    is_agreement_copy=is_copy,
                )
                if task.task_id in tasks:
                    raise ValueError(f"duplicate task id {task.task_id}")
                tasks[task.task_id] = task
                assignment[annotator].append(task.task_id)

    # per-annotator task order is shuffled so criteria and pairs interleave
    for annotator in roster:
        random.Random(f"{seed}:{annotator}").shuffle(assignment[annotator])

    return EvaluationSession(
        session_id=session_id, systems=systems,
        examples={e.example_id: e for e in examples},
        tasks=tasks, assignment=assignment, double_annotation_set=double_ids,
        seed=seed, guidelines=guidelines or default_guidelines(),
    )


def next_task(session: EvaluationSession, annotator_id: str) -> Task | None:
    """The annotator's first unjudged task; stable until a judgment lands."""
    if annotator_id not in session.assignment:
        raise UnknownAnnotator(annotator_id)
    for task_id in session.assignment[annotator_id]:
        if task_id not in session.judgments:
            return session.tasks[task_id]
    return None


def deblind_choice(task: Task, choice: str) -> Outcome:
    if choice not in CHOICES:
        raise ValueError(f"choice must be one of {CHOICES}, got {choice!r}")
    if choice == "Tie":
        return Outcome.TIE
    left_is_a = task.presentation_order is PresentationOrder.AB
    if choice == "Left":
        return Outcome.A_WINS if left_is_a else Outcome.B_WINS
    return Outcome.B_WINS if left_is_a else Outcome.A_WINS


def reblind_outcome(task: Task, outcome: Outcome) -> str:
    """Inverse of deblind_choice; used to verify the round-trip."""
    if outcome is Outcome.TIE:
        return "Tie"
    left_is_a = task.presentation_order is PresentationOrder.AB
    if outcome is Outcome.A_WINS:
        return "Left" if left_is_a else "Right"
    return "Right" if left_is_a else "Left"


def build_judgment(task: Task, choice: str) -> ComparisonJudgment:
    return ComparisonJudgment(
        example_id=task.example_id,
        criterion=task.criterion,
        system_a=task.system_a,
        system_b=task.system_b,
        outcome=deblind_choice(task, choice),
        annotator_id=task.annotator_id,
        presentation_order=task.presentation_order,
    )


class SessionStore:
    """A session plus an append-only judgment journal for durability."""

    def __init__(self, session: EvaluationSession, journal_path: str | Path | None = None):
        self.session = session
        self.journal_path = Path(journal_path) if journal_path else None
        if self.journal_path and self.journal_path.exists():
            self._replay()

    @classmethod
    def from_definition(cls, definition_path: str | Path,
                        journal_path: str | Path | None = None) -> "SessionStore":
        payload = json.loads(Path(definition_path).read_text(encoding="utf-8"))
        session = create_session(
            session_id=payload["session_id"],
            examples=[ExampleRecord.from_dict(e) for e in payload["examples"]],
            systems=payload["systems"],
            annotator_roster=payload["annotators"],
            double_fraction=payload.get("double_fraction", 0.1),
            seed=payload.get("seed", 0),
            guidelines=payload.get("guidelines"),
        )
        return cls(session, journal_path)

    def _replay(self) -> None:
        with self.journal_path.open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                task = self.session.tasks[record["task_id"]]
                judgment = build_judgment(task, record["choice"])
                self.session.judgments[task.task_id] = judgment
                self.session.judgment_order.append(task.task_id)

    def submit(self, annotator_id: str, task_id: str, choice: str) -> ComparisonJudgment:
        session = self.session
        if annotator_id not in session.assignment:
            raise UnknownAnnotator(annotator_id)
        task = session.tasks.get(task_id)
        if task is None or task.annotator_id != annotator_id:
            raise UnknownTask(task_id)
        if task_id in session.judgments:
            raise AlreadyJudged(task_id)
        judgment = build_judgment(task, choice)
        if self.journal_path:
            # the write-ahead record: persisted before the caller sees an ack
            with self.journal_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"task_id": task_id, "choice": choice,
                                     "annotator_id": annotator_id},
                                    sort_keys=True) + "\n")
                fh.flush()
        session.judgments[task_id] = judgment
        session.judgment_order.append(task_id)
        return judgment

    def export_judgments(self) -> list[ComparisonJudgment]:
        return [self.session.judgments[tid] for tid in self.session.judgment_order]

    def export_jsonl(self) -> str:
        return "".join(json.dumps(j.to_dict(), sort_keys=True) + "\n"
                       for j in self.export_judgments())

    def progress(self, annotator_id: str | None = None) -> dict:
        session = self.session
        per_annotator = {
            annotator: {
                "judged": sum(tid in session.judgments for tid in task_ids),
                "total": len(task_ids),
            }
            for annotator, task_ids in session.assignment.items()
        }
        if annotator_id is not None:
            if annotator_id not in per_annotator:
                raise UnknownAnnotator(annotator_id)
            return per_annotator[annotator_id]
        return {
            "judged": len(session.judgments),
            "total": len(session.tasks),
            "annotators": per_annotator,
        }
