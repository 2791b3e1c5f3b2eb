"""Run orchestration: plan, investigate under controller supervision, review.

A run generates candidate plans, keeps the highest-scoring one, then walks
its steps. Before each step the controller picks one of four actions
(answer from paper, answer from web, write review, skip); investigator
outcomes accumulate in a context log; unanswered pairs are filtered out
before the reviewer writes the final structured review.

With mock backends the whole run is a pure function of its inputs, which
is what the replayable fixtures rely on.
"""

from __future__ import annotations

import difflib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Sequence

from .aspects import IN_SCOPE_ASPECTS, Aspect, parse_aspect
from .backends import (
    BackendError,
    Budget,
    BudgetExceeded,
    ChatClient,
    ChatRequest,
    EmbeddingClient,
    SearchClient,
    TraceLog,
)
from .investigator import (
    ContextLog,
    CorpusIndex,
    Document,
    QAPair,
    answer_from_paper,
    answer_from_web,
    is_refusal,
    NO_ANSWER_TEXT,
)
from .plans import (
    Plan,
    PlanAction,
    PlanStep,
    ParseError,
    parse_plan,
    plan_to_json,
    plan_from_json,
    render_plan,
    render_step,
    render_step_line,
)
from .prompting import PromptLibrary
from .reranker import Scorer

log = logging.getLogger(__name__)


class NoValidPlan(RuntimeError):
    pass


class ControllerFailure(RuntimeError):
    pass


class ReviewParseFailure(RuntimeError):
    pass


class QuoteNotInParagraph(ValueError):
    pass


# --------------------------------------------------------------------------
# actions


class ActorKind(Enum):
    INVESTIGATOR = "Investigator"
    REVIEWER = "Reviewer"
    CONTROLLER = "Controller"


class ActionKind(Enum):
    ANSWER_FROM_PAPER = "AnswerFromPaper"
    ANSWER_FROM_WEB = "AnswerFromWeb"
    WRITE_REVIEW = "WriteReview"
    SKIP_STEP = "SkipStep"


#: the four decidable (actor, action) combinations
ACTION_REGISTRY: dict[tuple[str, str], tuple[ActorKind, ActionKind]] = {
    ("investigator", "answer question using the paper"):
        (ActorKind.INVESTIGATOR, ActionKind.ANSWER_FROM_PAPER),
    ("investigator", "answer question using google"):
        (ActorKind.INVESTIGATOR, ActionKind.ANSWER_FROM_WEB),
    ("reviewer", "write review"):
        (ActorKind.REVIEWER, ActionKind.WRITE_REVIEW),
    ("controller", "skip this step"):
        (ActorKind.CONTROLLER, ActionKind.SKIP_STEP),
}

# phrasings that appear in plans rather than in the action menu
ACTION_REGISTRY[("reviewer", "write a review based on the gathered context")] = \
    ACTION_REGISTRY[("reviewer", "write review")]
ACTION_REGISTRY[("reviewer", "write a review")] = \
    ACTION_REGISTRY[("reviewer", "write review")]

_INVESTIGATOR_KINDS = (ActionKind.ANSWER_FROM_PAPER, ActionKind.ANSWER_FROM_WEB)


@dataclass(frozen=True)
class AgentAction:
    explanation: str
    actor: ActorKind
    action: ActionKind
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        pair = (self.actor, self.action)
        if pair not in ACTION_REGISTRY.values():
            raise ValueError(f"({self.actor.value}, {self.action.value}) is not a registered action")
        if self.action in _INVESTIGATOR_KINDS:
            if set(self.parameters) != {"question"} or not self.parameters["question"]:
                raise ValueError("investigator actions take exactly a non-empty 'question'")
        elif self.parameters:
            raise ValueError(f"{self.action.value} takes no parameters")

    def to_dict(self) -> dict:
        return {"explanation": self.explanation, "actor": self.actor.value,
                "action": self.action.value, "parameters": dict(self.parameters)}


def parse_agent_action(reply: str) -> AgentAction:
    """Parse a controller JSON reply into a validated AgentAction."""
    start, end = reply.find("{"), reply.rfind("}")
    if start == -1 or end <= start:
        raise ValueError("reply contains no JSON object")
    payload = json.loads(reply[start:end + 1])
    missing = {"explanation", "actor", "action", "parameters"} - payload.keys()
    if missing:
        raise ValueError(f"missing keys: {sorted(missing)}")
    actor_raw = " ".join(str(payload["actor"]).split()).casefold()
    action_raw = " ".join(str(payload["action"]).split()).casefold().rstrip(".")
    key = (actor_raw, action_raw)
    if key not in ACTION_REGISTRY:
        raise ValueError(f"unregistered action: {payload['actor']!r} / {payload['action']!r}")
    actor, action = ACTION_REGISTRY[key]
    parameters = payload["parameters"] or {}
    if not isinstance(parameters, dict):
        raise ValueError("parameters must be a JSON object")
    if action in _INVESTIGATOR_KINDS:
        question = str(parameters.get("question", "")).strip()
        if not question:
            raise ValueError("investigator action without a question parameter")
        parameters = {"question": question}
    else:
        parameters = {}
    return AgentAction(explanation=str(payload["explanation"]), actor=actor,
                       action=action, parameters=parameters)


def step_to_action(step: PlanStep) -> AgentAction:
    """Literal translation of a plan step; the degraded-mode fallback."""
    if step.action is PlanAction.ANSWER_FROM_PAPER:
        return AgentAction("executed literally as planned", ActorKind.INVESTIGATOR,
                           ActionKind.ANSWER_FROM_PAPER, {"question": step.question})
    if step.action is PlanAction.ANSWER_FROM_WEB:
        return AgentAction("executed literally as planned", ActorKind.INVESTIGATOR,
                           ActionKind.ANSWER_FROM_WEB, {"question": step.question})
    return AgentAction("executed literally as planned", ActorKind.REVIEWER,
                       ActionKind.WRITE_REVIEW)


# --------------------------------------------------------------------------
# outcomes and result types


@dataclass(frozen=True)
class Skipped:
    reason: str = ""

    def to_dict(self) -> dict:
        return {"kind": "skipped", "reason": self.reason}


@dataclass(frozen=True)
class Review:
    quoted_substring: str
    label: Aspect
    review_text: str
    reasoning: str

    def __post_init__(self):
        if self.label not in IN_SCOPE_ASPECTS:
            raise ValueError(f"label {self.label.value!r} is not an in-scope aspect")

    def to_dict(self) -> dict:
        return {"quoted_substring": self.quoted_substring, "label": self.label.value,
                "review": self.review_text, "reasoning": self.reasoning}


@dataclass(frozen=True)
class ProgressEntry:
    step: PlanStep
    action: AgentAction
    outcome: QAPair | Skipped | Review

    def to_dict(self) -> dict:
        if isinstance(self.outcome, QAPair):
            outcome = {"kind": "qa", **self.outcome.to_dict()}
        elif isinstance(self.outcome, Review):
            outcome = {"kind": "review", **self.outcome.to_dict()}
        else:
            outcome = self.outcome.to_dict()
        return {"step": render_step(self.step), "action": self.action.to_dict(),
                "outcome": outcome}


@dataclass
class ProgressLog:
    entries: list[ProgressEntry] = field(default_factory=list)

    def append(self, entry: ProgressEntry) -> None:
        self.entries.append(entry)

    def to_dict(self) -> list[dict]:
        return [entry.to_dict() for entry in self.entries]


@dataclass
class RunResult:
    review: Review
    plan: Plan
    candidate_plans: list[tuple[Plan, float]]
    context: ContextLog
    progress: ProgressLog
    trace_ref: str

    def __post_init__(self):
        if self.candidate_plans:
            best = max(score for _, score in self.candidate_plans)
            chosen = next(score for plan, score in self.candidate_plans
                          if plan == self.plan)
            if chosen != best:
                raise ValueError("selected plan must carry the maximum score")

    def to_dict(self) -> dict:
        return {
            "review": self.review.to_dict(),
            "plan": {**plan_to_json(self.plan), "text": render_plan(self.plan)},
            "candidate_plans": [
                {"plan": plan_to_json(plan), "text": render_plan(plan), "score": score}
                for plan, score in self.candidate_plans
            ],
            "context": self.context.to_dict(),
            "progress": self.progress.to_dict(),
            "trace_ref": self.trace_ref,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


# --------------------------------------------------------------------------
# prompt rendering


def render_progress(progress: ProgressLog) -> str:
    if not progress.entries:
        return "No steps completed yet."
    lines = []
    for entry in progress.entries:
        if isinstance(entry.outcome, QAPair):
            answer = "no answer found" if entry.outcome.is_no_answer else entry.outcome.answer
            lines.append(f"{entry.step.index}. {render_step_line(entry.step)} -> {answer}")
        elif isinstance(entry.outcome, Skipped):
            lines.append(f"{entry.step.index}. {render_step_line(entry.step)} -> skipped")
        else:
            lines.append(f"{entry.step.index}. {render_step_line(entry.step)} -> review written")
    return "\n".join(lines)


def render_remaining(steps: Sequence[PlanStep]) -> str:
    return "\n".join(render_step(s) for s in steps) if steps else "None."


def render_context(context: ContextLog) -> str:
    blocks = [f"Paragraph:\n{context.paragraph}"]
    for pair in context.pairs:
        blocks.append(f"Question: {pair.question}\nAnswer: {pair.answer}")
    return "\n\n".join(blocks)


def bundled_reviewer_examples() -> list[dict]:
    path = resources.files("parareview") / "data" / "reviewer_examples.json"
    return json.loads(path.read_text(encoding="utf-8"))


def render_examples(examples: Sequence[dict]) -> str:
    return "\n\n".join(
        json.dumps({"reasoning": ex["reasoning"], "label": ex["label"],
                    "review": ex["review"]}, ensure_ascii=False)
        for ex in examples)


# --------------------------------------------------------------------------
# operations


def generate_candidate_plans(paragraph: str, n: int, chat: ChatClient,
                             prompts: PromptLibrary,
                             temperature: float = 0.7) -> list[Plan]:
    """Ask the planner n times; retry each unparseable output once, then drop it."""
    if n < 1:
        raise ValueError("n must be >= 1")
    template = prompts.load("planner")
    request = ChatRequest(system_message=template.system,
                          user_message=template.fill_user({"paragraph": paragraph}),
                          temperature=temperature, tag="planner")
    plans: list[Plan] = []
    for i in range(n):
        text = chat.generate(request)
        try:
            plans.append(parse_plan(text))
            continue
        except ParseError as exc:
            log.info("candidate %d did not parse (%s); retrying once", i + 1, exc)
        text = chat.generate(request)
        try:
            plans.append(parse_plan(text))
        except ParseError as exc:
            log.warning("candidate %d dropped after retry: %s", i + 1, exc)
    if not plans:
        raise NoValidPlan(f"all {n} planner outputs were unparseable")
    return plans


def controller_decide(paragraph: str, progress: ProgressLog,
                      remaining: Sequence[PlanStep], next_step: PlanStep,
                      chat: ChatClient, prompts: PromptLibrary,
                      retries: int = 3) -> AgentAction:
    """Fill the controller prompt and parse its JSON decision.

    Parse or schema failures are retried up to ``retries`` times with the
    error appended to the prompt; after that ControllerFailure is raised
    and the caller falls back to executing the step literally.
    """
    template = prompts.load("controller")
    base_user = template.fill_user({
        "paragraph": paragraph,
        "progress": render_progress(progress),
        "steps": render_remaining(remaining),
        "next step": render_step_line(next_step),
    })
    user = base_user
    last_error = ""
    for _ in range(retries + 1):
        reply = chat.generate(ChatRequest(system_message=template.system,
                                          user_message=user, tag="controller"))
        try:
            return parse_agent_action(reply)
        except (ValueError, json.JSONDecodeError) as exc:
            last_error = str(exc)
            log.info("controller reply rejected: %s", last_error)
            user = (f"{base_user}\n\nYour previous answer was invalid: {last_error}. "
                    f"Reply with ONLY one valid JSON object.")
    raise ControllerFailure(f"controller failed after {retries} retries: {last_error}")


def filter_context(context: ContextLog) -> ContextLog:
    """Drop unanswered QA pairs; order is preserved."""
    return ContextLog(paragraph=context.paragraph,
                      pairs=[p for p in context.pairs if not p.is_no_answer])


_CURLY = str.maketrans({"“": '"', "”": '"', "‘": "'", "’": "'"})
_DOUBLE_QUOTED = re.compile(r'"([^"]+)"')
_SINGLE_QUOTED = re.compile(r"(?<![A-Za-z0-9])'([^']{4,})'(?![A-Za-z0-9])")


def extract_quoted_substring(review_text: str) -> str:
    """Longest quoted span in the review text; empty when nothing is quoted."""
    folded = review_text.translate(_CURLY)
    spans = _DOUBLE_QUOTED.findall(folded) + _SINGLE_QUOTED.findall(folded)
    spans = [s.strip() for s in spans if s.strip()]
    return max(spans, key=len) if spans else ""


def _ws_norm(text: str) -> str:
    return " ".join(text.translate(_CURLY).split())


def quote_similarity(quote: str, paragraph: str) -> float:
    """Best fuzzy similarity of the quote against same-length paragraph windows."""
    quote_n, para_n = _ws_norm(quote), _ws_norm(paragraph)
    if not quote_n or not para_n:
        return 0.0
    if quote_n in para_n:
        return 1.0
    window = len(quote_n)
    if window >= len(para_n):
        return difflib.SequenceMatcher(None, quote_n, para_n).ratio()
    best = 0.0
    anchor = difflib.SequenceMatcher(None, para_n, quote_n)
    match = anchor.find_longest_match(0, len(para_n), 0, len(quote_n))
    starts = {max(0, match.a - match.b)}
    starts.update(range(0, len(para_n) - window + 1, max(1, window // 4)))
    for start in starts:
        candidate = para_n[start:start + window]
        best = max(best, difflib.SequenceMatcher(None, quote_n, candidate).ratio())
    return best


def verify_quote(quote: str, paragraph: str, fuzzy_threshold: float = 0.9) -> None:
    """Exact containment after whitespace normalization, else fuzzy match."""
    if not quote:
        return
    if _ws_norm(quote) in _ws_norm(paragraph):
        return
    similarity = quote_similarity(quote, paragraph)
    if similarity < fuzzy_threshold:
        raise QuoteNotInParagraph(
            f"quoted text not found (similarity {similarity:.3f}): {quote[:80]!r}")


def write_review(paragraph: str, context: ContextLog, chat: ChatClient,
                 prompts: PromptLibrary, examples: Sequence[dict] | None = None,
                 retries: int = 2, fuzzy_threshold: float = 0.9) -> Review:
    """Run the reviewer over filtered context and parse its JSON review."""
    examples = examples if examples is not None else bundled_reviewer_examples()
    template = prompts.load("reviewer")
    base_user = template.fill_user({
        "context": render_context(context),
        "in-context learning examples": render_examples(examples),
    })
    user = base_user
    last_error = ""
    for _ in range(retries + 1):
        reply = chat.generate(ChatRequest(system_message=template.system,
                                          user_message=user, tag="reviewer"))
        try:
            start, end = reply.find("{"), reply.rfind("}")
            if start == -1 or end <= start:
                raise ValueError("reply contains no JSON object")
            payload = json.loads(reply[start:end + 1])
            missing = {"reasoning", "label", "review"} - payload.keys()
            if missing:
                raise ValueError(f"missing keys: {sorted(missing)}")
            label = parse_aspect(str(payload["label"]).strip())
            if label not in IN_SCOPE_ASPECTS:
                raise ValueError(f"label {payload['label']!r} is out of scope")
            # review and reasoning are kept verbatim, including edge whitespace
            review_text = str(payload["review"])
            if not review_text.strip():
                raise ValueError("empty review text")
            quote = extract_quoted_substring(review_text)
        except (ValueError, json.JSONDecodeError) as exc:
            last_error = str(exc)
            log.info("reviewer reply rejected: %s", last_error)
            user = (f"{base_user}\n\nYour previous answer was invalid: {last_error}. "
                    f"Reply with ONLY one valid JSON object with keys "
                    f"\"reasoning\", \"label\" and \"review\".")
            continue
        verify_quote(quote, paragraph, fuzzy_threshold)
        return Review(quoted_substring=quote, label=label, review_text=review_text,
                      reasoning=str(payload["reasoning"]))
    raise ReviewParseFailure(f"reviewer failed after {retries} retries: {last_error}")


def crosscheck_pair(pair: QAPair, paragraph: str, chat: ChatClient,
                    prompts: PromptLibrary) -> QAPair:
    """One verification call per answered pair; replaces refuted answers."""
    template = prompts.load("crosscheck")
    reply = chat.generate(ChatRequest(
        system_message=template.system or "You verify answers against context.",
        user_message=template.fill_user({
            "context": paragraph, "question": pair.question, "answer": pair.answer}),
        tag="crosscheck")).strip()
    if reply.casefold().rstrip(".") == "confirmed":
        return pair
    corrected = NO_ANSWER_TEXT if is_refusal(reply) else reply
    return QAPair(question=pair.question, answer=corrected, source=pair.source,
                  evidence=pair.evidence, url=pair.url)


# --------------------------------------------------------------------------
# the full loop


@dataclass
class PipelineSettings:
    variant: str = "full"  # full | gpt4 | cove | no_rerank
    n_candidate_plans: int = 4
    planner_temperature: float = 0.7
    controller_retries: int = 3
    reviewer_retries: int = 2
    k_chunks: int = 5
    chunk_chars: int = 1000
    overlap_chars: int = 100
    max_web_hits: int = 5
    quote_fuzzy_threshold: float = 0.9

    def __post_init__(self):
        if self.variant not in ("full", "gpt4", "cove", "no_rerank"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def crosscheck(self) -> bool:
        return self.variant == "cove"

    @property
    def rerank(self) -> bool:
        return self.variant in ("full", "cove")


@dataclass
class PipelineBackends:
    chat: ChatClient
    embedder: EmbeddingClient
    prompts: PromptLibrary
    search: SearchClient | None = None
    fetcher: object | None = None
    scorer: Scorer | None = None
    reviewer_examples: list[dict] | None = None

    @property
    def trace(self) -> TraceLog:
        return self.chat.trace

    @classmethod
    def from_mocks(cls, script, search_fixtures: dict | None = None,
                   scorer: Scorer | None = None,
                   prompts: PromptLibrary | None = None,
                   budget: Budget | None = None) -> "PipelineBackends":
        from .backends import (MockChatBackend, MockEmbeddingBackend,
                               MockSearchBackend, MockScript, RetryPolicy)

        if not isinstance(script, MockScript):
            script = MockScript.from_dict(script)
        trace = TraceLog()
        retry = RetryPolicy(base_delay=0.0)
        search_backend = MockSearchBackend(search_fixtures or {})
        return cls(
            chat=ChatClient(MockChatBackend(script), trace=trace,
                            budget=budget or Budget(), retry=retry),
            embedder=EmbeddingClient(MockEmbeddingBackend(), trace=trace, retry=retry),
            prompts=prompts or PromptLibrary(),
            search=SearchClient(search_backend, trace=trace),
            fetcher=search_backend,
            scorer=scorer,
        )


def _single_review_plan() -> Plan:
    return plan_from_json({"steps": [
        {"index": 1, "actor": "Reviewer", "action": "write_review", "question": None}]})


def run_review(paragraph: str, paper_documents: Sequence[Document],
               backends: PipelineBackends,
               settings: PipelineSettings = PipelineSettings()) -> RunResult:
    """Execute one full review run; deterministic under mock backends."""
    if not paragraph or not paragraph.strip():
        raise ValueError("paragraph must be non-empty")

    if settings.variant == "gpt4":
        plan = _single_review_plan()
        candidates = [(plan, 0.0)]
    else:
        plans = generate_candidate_plans(paragraph, settings.n_candidate_plans,
                                         backends.chat, backends.prompts,
                                         settings.planner_temperature)
        if settings.rerank and backends.scorer is not None:
            scores = [backends.scorer.score(paragraph, render_plan(p)) for p in plans]
        else:
            scores = [0.0] * len(plans)
        best = max(range(len(plans)), key=lambda i: (scores[i], -i))
        plan, candidates = plans[best], list(zip(plans, scores))

    index = CorpusIndex.build(paper_documents, backends.embedder,
                              settings.chunk_chars, settings.overlap_chars) \
        if paper_documents else CorpusIndex([])

    context = ContextLog(paragraph=paragraph)
    progress = ProgressLog()
    review: Review | None = None

    for pos, step in enumerate(plan.steps):
        remaining = plan.steps[pos:]
        try:
            action = controller_decide(paragraph, progress, remaining, step,
                                       backends.chat, backends.prompts,
                                       settings.controller_retries)
        except ControllerFailure as exc:
            log.warning("degraded mode for step %d: %s", step.index, exc)
            action = step_to_action(step)

        outcome: QAPair | Skipped | Review
        if action.action is ActionKind.SKIP_STEP:
            outcome = Skipped("controller skipped this step")
        elif action.action is ActionKind.WRITE_REVIEW:
            review = write_review(paragraph, filter_context(context), backends.chat,
                                  backends.prompts, backends.reviewer_examples,
                                  settings.reviewer_retries,
                                  settings.quote_fuzzy_threshold)
            outcome = review
        else:
            question = action.parameters["question"]
            try:
                if action.action is ActionKind.ANSWER_FROM_PAPER:
                    pair = answer_from_paper(question, index, backends.embedder,
                                             backends.chat, backends.prompts,
                                             settings.k_chunks)
                elif backends.search is None or backends.fetcher is None:
                    pair = None
                    outcome = Skipped("no web backend configured")
                else:
                    pair = answer_from_web(question, backends.search, backends.fetcher,
                                           backends.embedder, backends.chat,
                                           backends.prompts, settings.k_chunks,
                                           settings.max_web_hits, settings.chunk_chars,
                                           settings.overlap_chars)
            except BudgetExceeded:
                raise
            except BackendError as exc:
                log.warning("investigator failed on step %d: %s", step.index, exc)
                pair = None
                outcome = Skipped(f"investigator failure: {exc}")
            if pair is not None:
                if settings.crosscheck and not pair.is_no_answer:
                    pair = crosscheck_pair(pair, paragraph, backends.chat,
                                           backends.prompts)
                context.append(pair)
                outcome = pair

        progress.append(ProgressEntry(step=step, action=action, outcome=outcome))

    if review is None:
        log.info("plan produced no review step; reviewing gathered context anyway")
        review = write_review(paragraph, filter_context(context), backends.chat,
                              backends.prompts, backends.reviewer_examples,
                              settings.reviewer_retries, settings.quote_fuzzy_threshold)

    return RunResult(review=review, plan=plan, candidate_plans=candidates,
                     context=context, progress=progress,
                     trace_ref=backends.trace.trace_ref)
