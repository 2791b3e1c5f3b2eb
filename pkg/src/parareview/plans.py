"""Agent plan model: parsing, validation against the golden rules, rendering.

A plan is a numbered list of steps. Each step either asks the investigator a
question (answered from the paper or from a web search) or tells the reviewer
to write the review. Parsing is deliberately lenient about phrasing -- model
output drifts -- while :func:`validate_plan` enforces the strict form:

* R1   every step maps to a defined actor/action
* R2a  all paper questions come before all web questions
* R2b  the final step is exactly the terminal reviewer sentence
* R2c  no investigator step follows the review step
* R3   (warning) a question should ask about a single concept
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

TERMINAL_REVIEW_SENTENCE = "Reviewer: Write a review based on the gathered context."


class Actor(Enum):
    INVESTIGATOR = "Investigator"
    REVIEWER = "Reviewer"


class PlanAction(Enum):
    ANSWER_FROM_PAPER = "answer_from_paper"
    ANSWER_FROM_WEB = "answer_from_web"
    WRITE_REVIEW = "write_review"


INVESTIGATOR_ACTIONS = (PlanAction.ANSWER_FROM_PAPER, PlanAction.ANSWER_FROM_WEB)


class ParseError(ValueError):
    """A plan line matched no known action pattern."""

    def __init__(self, message: str, index: int | None = None, line: str = ""):
        super().__init__(message)
        self.index = index
        self.line = line


@dataclass(frozen=True)
class PlanStep:
    """One numbered plan step.

    ``source_line`` keeps the original text (without the number prefix) when
    the step came from parsed model output; it is excluded from equality so
    re-rendered plans compare structurally.
    """

    index: int
    actor: Actor
    action: PlanAction
    question: str | None = None
    source_line: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.action in INVESTIGATOR_ACTIONS:
            if self.actor is not Actor.INVESTIGATOR:
                raise ValueError(f"step {self.index}: {self.action.value} requires the Investigator")
            if not self.question or not self.question.endswith("?"):
                raise ValueError(f"step {self.index}: investigator question must be non-empty and end with '?'")
        else:
            if self.actor is not Actor.REVIEWER:
                raise ValueError(f"step {self.index}: write_review requires the Reviewer")
            if self.question is not None:
                raise ValueError(f"step {self.index}: review step takes no question")


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for pos, step in enumerate(self.steps, start=1):
            if step.index != pos:
                raise ValueError(f"step indices must be contiguous from 1, got {step.index} at position {pos}")
        reviews = [s for s in self.steps if s.action is PlanAction.WRITE_REVIEW]
        if len(reviews) > 1:
            raise ValueError("plan contains more than one review step")


@dataclass(frozen=True)
class Violation:
    rule_id: str  # R1, R2a, R2b, R2c or R3
    step_index: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    #: rules whose violation makes the plan invalid; R3 is only a warning
    FAILING_RULES = frozenset({"R1", "R2a", "R2b", "R2c"})

    @property
    def verdict(self) -> str:
        failing = any(v.rule_id in self.FAILING_RULES for v in self.violations)
        return "invalid" if failing else "valid"

    @property
    def is_valid(self) -> bool:
        return self.verdict == "valid"

    def by_rule(self, rule_id: str) -> list[Violation]:
        return [v for v in self.violations if v.rule_id == rule_id]


_NUMBERED_LINE = re.compile(r"^\s*(\d+)\s*[.):]\s*(.*\S)\s*$")

# Ordered action patterns; the first match wins. Quotes around the question
# are optional in all investigator phrasings.
_PAPER_PATTERNS = [
    re.compile(r"^(?:Investigator\s*:\s*)?Answer(?:\s+the)?\s+question\s+using\s+the\s+paper\s*:?\s*(?P<q>.+)$", re.I),
    re.compile(r"^(?:Investigator\s*:\s*)?Search\s+the\s+paper\s+to\s+understand\s+(?P<q>.+)$", re.I),
    re.compile(r"^(?:Investigator\s*:\s*)?Answer\s+(?P<q>.+?)\s+using\s+the\s+paper\s*\.?$", re.I),
]
_WEB_PATTERNS = [
    re.compile(r"^(?:Investigator\s*:\s*)?Answer(?:\s+the)?\s+question\s+using\s+(?:Google|the\s+web)\s*:?\s*(?P<q>.+)$", re.I),
    re.compile(r"^(?:Investigator\s*:\s*)?Search\s+the\s+web\s+to\s+understand\s+(?P<q>.+)$", re.I),
    re.compile(r"^(?:Investigator\s*:\s*)?Answer\s+(?P<q>.+?)\s+using\s+(?:Google|the\s+web)\s*\.?$", re.I),
]
_REVIEW_LENIENT = re.compile(r"^(?:Reviewer\s*:\s*)?Write\s+a\s+.*review\b.*$", re.I)

_QUOTE_CHARS = "\"'“”‘’«»`"

# two interrogative clauses joined by a coordinating conjunction
_MULTI_CONCEPT = re.compile(r"\b(?:and|or)\s+(?:what|how|why|when|where|which|who|whether)\b", re.I)


def _clean_question(raw: str, index: int) -> str:
    q = raw.strip().strip(_QUOTE_CHARS).strip()
    if not q:
        raise ParseError(f"step {index}: empty question", index=index, line=raw)
    if not q.endswith("?"):
        q = q.rstrip(".") + "?"
        log.info("step %d: appended missing '?' to question", index)
    return q


def _classify_line(content: str, index: int) -> PlanStep:
    """Map one numbered-line content to a PlanStep, or raise ParseError."""
    stripped = content.strip()
    for pattern in _PAPER_PATTERNS:
        m = pattern.match(stripped)
        if m:
            return PlanStep(index, Actor.INVESTIGATOR, PlanAction.ANSWER_FROM_PAPER,
                            _clean_question(m.group("q"), index), source_line=stripped)
    for pattern in _WEB_PATTERNS:
        m = pattern.match(stripped)
        if m:
            return PlanStep(index, Actor.INVESTIGATOR, PlanAction.ANSWER_FROM_WEB,
                            _clean_question(m.group("q"), index), source_line=stripped)
    if stripped == TERMINAL_REVIEW_SENTENCE or _REVIEW_LENIENT.match(stripped):
        return PlanStep(index, Actor.REVIEWER, PlanAction.WRITE_REVIEW, source_line=stripped)
    raise ParseError(f"step {index}: unrecognized action: {stripped!r}", index=index, line=stripped)


def _numbered_contents(text: str) -> list[tuple[int, str]]:
    out = []
    for line in text.splitlines():
        m = _NUMBERED_LINE.match(line)
        if m:
            out.append((int(m.group(1)), m.group(2)))
    return out


def parse_plan(text: str) -> Plan:
    """Parse numbered-list plan text into a Plan.

    Non-numbered lines (preambles, blank lines) are ignored. Raises
    ParseError when a numbered line matches no action pattern or the
    resulting steps break the Plan invariants.
    """
    if not text or not text.strip():
        raise ParseError("empty plan text")
    numbered = _numbered_contents(text)
    if not numbered:
        raise ParseError("no numbered steps found")
    steps = [_classify_line(content, idx) for idx, content in numbered]
    try:
        return Plan(steps=tuple(steps), source_text=text)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def render_step(step: PlanStep) -> str:
    """Canonical single-line rendering of a step, including its number."""
    if step.action is PlanAction.ANSWER_FROM_PAPER:
        return f'{step.index}. Investigator: Answer question using the paper: "{step.question}"'
    if step.action is PlanAction.ANSWER_FROM_WEB:
        return f'{step.index}. Investigator: Answer question using Google: "{step.question}"'
    return f"{step.index}. {TERMINAL_REVIEW_SENTENCE}"


def render_plan(plan: Plan) -> str:
    """Deterministic numbered-list rendering; parse_plan round-trips it."""
    return "\n".join(render_step(s) for s in plan.steps)


def render_step_line(step: PlanStep) -> str:
    """Canonical step text without the list number."""
    return render_step(step).split(". ", 1)[1]


def _effective_line(step: PlanStep) -> str:
    """Text the step stands for: the original line if parsed, else canonical."""
    if step.source_line is not None:
        return step.source_line
    return render_step_line(step)


def validate_plan(plan: Plan) -> ValidationReport:
    """Check the golden rules on a structured plan. Always returns a report."""
    violations: list[Violation] = []
    steps = plan.steps

    if not steps:
        violations.append(Violation("R2b", 0, "plan has no steps; it must end with the review step"))
        return ValidationReport(tuple(violations))

    seen_web = False
    seen_review = False
    for step in steps:
        if step.action is PlanAction.ANSWER_FROM_WEB:
            seen_web = True
        if step.action is PlanAction.ANSWER_FROM_PAPER and seen_web:
            violations.append(Violation("R2a", step.index, "paper question appears after a web question"))
        if step.action in INVESTIGATOR_ACTIONS and seen_review:
            violations.append(Violation("R2c", step.index, "investigator step after the review step"))
        if step.action is PlanAction.WRITE_REVIEW:
            seen_review = True
        if step.question and _MULTI_CONCEPT.search(step.question):
            violations.append(Violation("R3", step.index, f"question may cover more than one concept: {step.question!r}"))

    last = steps[-1]
    if last.action is not PlanAction.WRITE_REVIEW or _effective_line(last) != TERMINAL_REVIEW_SENTENCE:
        violations.append(Violation(
            "R2b", last.index,
            f"final step must be exactly {TERMINAL_REVIEW_SENTENCE!r}, got {_effective_line(last)!r}"))

    return ValidationReport(tuple(violations))


def validate_plan_text(text: str) -> ValidationReport:
    """Lenient rule check over raw plan text that may not fully parse.

    Lines matching no action pattern become R1 violations (numbered lines
    keep their number; unnumbered non-blank lines are counted in order of
    appearance). Rules R2a/R2b/R2c/R3 run over whatever did parse.
    """
    violations: list[Violation] = []
    steps: list[PlanStep] = []
    contents: list[tuple[int, str]] = []

    lines = [ln for ln in text.splitlines() if ln.strip()]
    for pos, line in enumerate(lines, start=1):
        m = _NUMBERED_LINE.match(line)
        if m:
            contents.append((int(m.group(1)), m.group(2)))
        else:
            contents.append((pos, line.strip()))

    for idx, content in contents:
        try:
            steps.append(_classify_line(content, idx))
        except ParseError:
            violations.append(Violation("R1", idx, f"no defined actor/action: {content!r}"))

    seen_web = False
    seen_review = False
    for step in steps:
        if step.action is PlanAction.ANSWER_FROM_WEB:
            seen_web = True
        if step.action is PlanAction.ANSWER_FROM_PAPER and seen_web:
            violations.append(Violation("R2a", step.index, "paper question appears after a web question"))
        if step.action in INVESTIGATOR_ACTIONS and seen_review:
            violations.append(Violation("R2c", step.index, "investigator step after the review step"))
        if step.action is PlanAction.WRITE_REVIEW:
            seen_review = True
        if step.question and _MULTI_CONCEPT.search(step.question):
            violations.append(Violation("R3", step.index, f"question may cover more than one concept: {step.question!r}"))

    last_content = contents[-1][1].strip() if contents else ""
    if last_content != TERMINAL_REVIEW_SENTENCE:
        last_idx = contents[-1][0] if contents else 0
        violations.append(Violation(
            "R2b", last_idx,
            f"final step must be exactly {TERMINAL_REVIEW_SENTENCE!r}, got {last_content!r}"))

    return ValidationReport(tuple(violations))


def extract_steps_lenient(text: str) -> tuple[int, list[PlanStep]]:
    """Best-effort step extraction from raw text, numbered or not.

    Returns (count of non-blank lines, steps that classified). Used for
    feature extraction where unparseable plans are data, not errors.
    """
    steps: list[PlanStep] = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for pos, line in enumerate(lines, start=1):
        m = _NUMBERED_LINE.match(line)
        idx, content = (int(m.group(1)), m.group(2)) if m else (pos, line.strip())
        try:
            steps.append(_classify_line(content, idx))
        except ParseError:
            continue
    return len(lines), steps


def plan_to_json(plan: Plan) -> dict:
    return {
        "steps": [
            {"index": s.index, "actor": s.actor.value, "action": s.action.value, "question": s.question}
            for s in plan.steps
        ]
    }


def plan_from_json(payload: dict) -> Plan:
    steps = tuple(
        PlanStep(
            index=entry["index"],
            actor=Actor(entry["actor"]),
            action=PlanAction(entry["action"]),
            question=entry.get("question"),
        )
        for entry in payload["steps"]
    )
    plan = Plan(steps=steps)
    return Plan(steps=steps, source_text=render_plan(plan))
