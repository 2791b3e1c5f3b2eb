from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from parareview.plans import (
    TERMINAL_REVIEW_SENTENCE,
    Actor,
    ParseError,
    Plan,
    PlanAction,
    PlanStep,
    extract_steps_lenient,
    parse_plan,
    plan_from_json,
    plan_to_json,
    render_plan,
    render_step,
    validate_plan,
    validate_plan_text,
)

WELL_FORMED = """1. Investigator: Answer question using the paper: "What is the loss function?"
2. Investigator: Answer question using the paper: "Which datasets are used?"
3. Investigator: Answer question using Google: "What is the common baseline for this task?"
4. Reviewer: Write a review based on the gathered context."""


def test_parse_well_formed_plan():
    plan = parse_plan(WELL_FORMED)
    assert len(plan.steps) == 4
    assert plan.steps[0].actor is Actor.INVESTIGATOR
    assert plan.steps[0].action is PlanAction.ANSWER_FROM_PAPER
    assert plan.steps[0].question == "What is the loss function?"
    assert plan.steps[2].action is PlanAction.ANSWER_FROM_WEB
    assert plan.steps[3].action is PlanAction.WRITE_REVIEW
    assert plan.steps[3].question is None


def test_render_round_trips():
    plan = parse_plan(WELL_FORMED)
    assert render_plan(plan) == WELL_FORMED
    assert parse_plan(render_plan(plan)) == plan


def test_parse_rejects_prose():
    with pytest.raises(ParseError):
        parse_plan("This paragraph is fine and needs no questions.")


def test_parse_rejects_non_contiguous_numbering():
    text = WELL_FORMED.replace("2.", "5.", 1)
    with pytest.raises(ParseError):
        parse_plan(text)


def test_parse_rejects_unknown_action():
    text = WELL_FORMED.replace("Answer question using the paper", "Summarize the paper", 1)
    with pytest.raises(ParseError):
        parse_plan(text)


def test_terminal_sentence_constant():
    assert TERMINAL_REVIEW_SENTENCE == "Reviewer: Write a review based on the gathered context."


def test_validate_clean_plan():
    report = validate_plan(parse_plan(WELL_FORMED))
    assert report.is_valid
    assert report.violations == ()


def test_validate_paper_after_web_is_r2a():
    text = """1. Investigator: Answer question using Google: "What is the baseline?"
2. Investigator: Answer question using the paper: "What is the loss?"
3. Reviewer: Write a review based on the gathered context."""
    report = validate_plan(parse_plan(text))
    assert {v.rule_id for v in report.violations} == {"R2a"}
    assert not report.is_valid


def test_validate_missing_terminal_is_r2b():
    text = """1. Investigator: Answer question using the paper: "What is the loss?"
2. Investigator: Answer question using Google: "What is the baseline?\""""
    report = validate_plan(parse_plan(text))
    assert {v.rule_id for v in report.violations} == {"R2b"}


def test_validate_investigator_after_review_is_r2c():
    text = """1. Investigator: Answer question using the paper: "What is the loss?"
2. Reviewer: Write a review based on the gathered context.
3. Investigator: Answer question using the paper: "What else?\""""
    report = validate_plan_text(text)
    rule_ids = {v.rule_id for v in report.violations}
    assert "R2c" in rule_ids
    # the review step is no longer last, so the terminal rule fires too
    assert "R2b" in rule_ids


def test_validate_multi_concept_question_is_advisory_r3():
    text = """1. Investigator: Answer question using the paper: "What is the loss and how is it optimized?"
2. Reviewer: Write a review based on the gathered context."""
    report = validate_plan(parse_plan(text))
    assert {v.rule_id for v in report.violations} == {"R3"}
    assert report.is_valid  # R3 is advisory


def test_validate_text_flags_prose_as_r1_and_r2b():
    report = validate_plan_text("Here is my answer to the review request.")
    rule_ids = {v.rule_id for v in report.violations}
    assert rule_ids == {"R1", "R2b"}


def test_validate_text_tolerates_unnumbered_terminal():
    text = "Investigator: Answer question using the paper: \"What is X?\"\n" + TERMINAL_REVIEW_SENTENCE
    report = validate_plan_text(text)
    assert report.is_valid


def test_extract_steps_lenient_counts_lines():
    text = "Some prose line.\n" + WELL_FORMED
    total, steps = extract_steps_lenient(text)
    assert total == 5
    assert len(steps) == 4


def test_plan_json_round_trip():
    plan = parse_plan(WELL_FORMED)
    assert plan_from_json(plan_to_json(plan)) == plan


def test_plan_invariants():
    step = PlanStep(index=1, actor=Actor.REVIEWER, action=PlanAction.WRITE_REVIEW, question=None)
    with pytest.raises(ValueError):
        Plan(steps=(step, step))  # duplicate indices are not contiguous
    with pytest.raises(ValueError):
        PlanStep(index=1, actor=Actor.INVESTIGATOR, action=PlanAction.ANSWER_FROM_PAPER, question="")


_QUESTION_TEXT = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" -"),
    min_size=1, max_size=60,
).map(lambda s: s.strip()).filter(lambda s: s and "?" not in s and '"' not in s)


@given(st.lists(st.tuples(_QUESTION_TEXT, st.booleans()), min_size=0, max_size=6))
def test_parse_render_identity_property(question_specs):
    steps = []
    for i, (question, use_web) in enumerate(question_specs, start=1):
        action = PlanAction.ANSWER_FROM_WEB if use_web else PlanAction.ANSWER_FROM_PAPER
        steps.append(PlanStep(index=i, actor=Actor.INVESTIGATOR, action=action,
                              question=question + "?"))
    steps.append(PlanStep(index=len(steps) + 1, actor=Actor.REVIEWER,
                          action=PlanAction.WRITE_REVIEW, question=None))
    plan = Plan(steps=tuple(steps))
    assert parse_plan(render_plan(plan)) == plan


def test_render_step_canonical_forms():
    paper = PlanStep(index=1, actor=Actor.INVESTIGATOR,
                     action=PlanAction.ANSWER_FROM_PAPER, question="What is X?")
    web = PlanStep(index=2, actor=Actor.INVESTIGATOR,
                   action=PlanAction.ANSWER_FROM_WEB, question="What is Y?")
    review = PlanStep(index=3, actor=Actor.REVIEWER,
                      action=PlanAction.WRITE_REVIEW, question=None)
    assert render_step(paper) == '1. Investigator: Answer question using the paper: "What is X?"'
    assert render_step(web) == '2. Investigator: Answer question using Google: "What is Y?"'
    assert render_step(review) == "3. " + TERMINAL_REVIEW_SENTENCE
