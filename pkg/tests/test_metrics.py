from __future__ import annotations

import math
import random

import pytest

from parareview.aspects import Aspect
from parareview.metrics import (
    ComparisonJudgment,
    Criterion,
    DegenerateDistribution,
    DominanceTable,
    DuplicateJudgment,
    EmptyCandidate,
    LengthMismatch,
    Outcome,
    PresentationOrder,
    aspect_scores,
    bleu4,
    cohen_kappa,
    dominance,
    load_judgments,
    meteor_simplified,
    paired_outcomes,
    render_dominance_table,
    rouge_l,
    save_judgments,
    tie_rate,
)
from tests.oracles.reference_metrics import (
    bleu4_reference,
    kappa_reference,
    rouge_l_reference,
)

PAIRS = [
    ("the cat sat on the mat", "the cat sat on the mat"),
    ("the cat sat on the mat", "a cat was sitting on the mat"),
    ("results improve over the baseline by two points", "the baseline improves results"),
    ("we propose a novel method", "a novel method is proposed by us"),
    ("completely different words here", "nothing shared at all between them"),
    ("a b c d", "a c d e"),
    ("one two three four five six seven", "one two three four"),
    ("one two", "one two three four five six seven eight"),
    ("repeat repeat repeat repeat", "repeat repeat"),
    ("the the the the", "the"),
    ("alpha beta gamma delta epsilon", "alpha beta gamma delta epsilon zeta"),
    ("training loss decreases smoothly", "training loss decreases smoothly over epochs"),
    ("the model overfits quickly", "the model generalizes slowly"),
    ("p q r s t u v w", "p q r s t u v w"),
    ("x", "x"),
    ("x", "y"),
    ("longer candidate than the tiny reference given", "tiny reference"),
    ("evaluation is thorough and convincing", "evaluation is brief"),
    ("numbers 1 2 3 match digits", "numbers 1 2 3 match digits"),
    ("The Cat Sat", "the cat sat"),
]


def test_bleu_matches_reference_on_fixture_pairs():
    for cand, ref in PAIRS:
        got = bleu4(cand, [ref])
        want = bleu4_reference(cand, [ref])
        assert got == pytest.approx(want, abs=1e-6), (cand, ref)


def test_rouge_matches_reference_on_fixture_pairs():
    for cand, ref in PAIRS:
        got = rouge_l(cand, ref)
        want = rouge_l_reference(cand, ref)
        assert got == pytest.approx(want, abs=1e-6), (cand, ref)


def test_identity_inputs_score_one():
    assert bleu4("a full sentence with enough tokens", ["a full sentence with enough tokens"]) == pytest.approx(1.0)
    assert rouge_l("a full sentence", "a full sentence") == pytest.approx(1.0)


def test_bleu_multi_reference_clipping():
    cand = "the cat the cat"
    refs = ["the cat", "cat the cat sat"]
    assert bleu4(cand, refs) == pytest.approx(bleu4_reference(cand, refs), abs=1e-6)


def test_bleu_smoothing_toggle():
    cand, ref = "alpha beta gamma", "alpha delta epsilon"
    assert bleu4(cand, [ref], smoothing=False) == 0.0
    assert bleu4(cand, [ref], smoothing=True) > 0.0


def test_bleu_brevity_penalty_direction():
    short = bleu4("one two", ["one two three four five six"])
    full = bleu4("one two three four five six", ["one two three four five six"])
    assert short < full


def test_bleu_empty_candidate_raises():
    with pytest.raises(EmptyCandidate):
        bleu4("", ["reference"])


def test_rouge_spec_example():
    assert rouge_l("a b c d", "a c d e") == pytest.approx(0.75)


def test_meteor_known_values():
    # all 6 tokens match in one chunk: Fmean=1, penalty=0.5*(1/6)^3
    expected = 1.0 * (1 - 0.5 * (1 / 6) ** 3)
    assert meteor_simplified("a b c d e f", "a b c d e f") == pytest.approx(expected)
    # no matches at all
    assert meteor_simplified("aa bb", "cc dd") == 0.0


def test_meteor_stem_stage_matches():
    # "training" vs "train": stem match only
    with_stem = meteor_simplified("training", "train")
    assert with_stem > 0.0


def test_meteor_fragmentation_penalty():
    contiguous = meteor_simplified("a b c d", "a b c d")
    fragmented = meteor_simplified("a c b d", "a b c d")
    assert fragmented < contiguous


def test_aspect_scores_accuracy_and_f1():
    preds = ["Substance", "Clarity", "Substance", "Originality"]
    golds = ["Substance", "Substance", "Substance", "Originality"]
    report = aspect_scores(preds, golds)
    assert report.accuracy == pytest.approx(3 / 4)
    assert report.f1[Aspect.ORIGINALITY] == pytest.approx(1.0)
    # Substance: precision 2/2, recall 2/3 -> F1 = 0.8
    assert report.f1[Aspect.SUBSTANCE] == pytest.approx(0.8)


def test_aspect_scores_length_mismatch():
    with pytest.raises(LengthMismatch):
        aspect_scores(["Substance"], [])


def judgment(example, criterion, a, b, outcome, annotator="ann1",
             order=PresentationOrder.AB):
    return ComparisonJudgment(example_id=example, criterion=criterion, system_a=a,
                              system_b=b, outcome=outcome, annotator_id=annotator,
                              presentation_order=order)


def test_dominance_masses():
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "s1", "s2", Outcome.A_WINS),
        judgment("e2", Criterion.SPECIFICITY, "s1", "s2", Outcome.TIE),
    ]
    table = dominance(judgments, Criterion.SPECIFICITY, systems=("s1", "s2"))
    # A wins: loser s2 row, winner s1 column gets +1; tie adds 0.5 to both cells
    assert table.cells[("s2", "s1")] == pytest.approx(1.5)
    assert table.cells[("s1", "s2")] == pytest.approx(0.5)
    assert table.totals["s1"] == pytest.approx(1.5)
    assert table.totals["s2"] == pytest.approx(0.5)
    assert table.total_mass == pytest.approx(2.0)


def test_dominance_double_annotation_averaging():
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "s1", "s2", Outcome.A_WINS, annotator="ann1"),
        judgment("e1", Criterion.SPECIFICITY, "s1", "s2", Outcome.B_WINS, annotator="ann2"),
    ]
    averaged = dominance(judgments, Criterion.SPECIFICITY, systems=("s1", "s2"))
    assert averaged.total_mass == pytest.approx(1.0)
    assert averaged.cells[("s2", "s1")] == pytest.approx(0.5)
    assert averaged.cells[("s1", "s2")] == pytest.approx(0.5)

    raw = dominance(judgments, Criterion.SPECIFICITY, systems=("s1", "s2"),
                    average_doubles=False)
    assert raw.total_mass == pytest.approx(2.0)


def test_dominance_mass_conservation_random():
    rng = random.Random(5)
    systems = ("s1", "s2", "s3")
    judgments = []
    for i in range(60):
        a, b = rng.sample(systems, 2)
        outcome = rng.choice(list(Outcome))
        judgments.append(judgment(f"e{i}", Criterion.HELPFULNESS, a, b, outcome,
                                  annotator=f"ann{rng.randint(1, 3)}"))
    table = dominance(judgments, Criterion.HELPFULNESS, systems=systems)
    # every (example, pair) group contributes exactly 1.0 mass after averaging
    groups = {(j.example_id, j.pair) for j in judgments}
    assert table.total_mass == pytest.approx(len(groups))


def test_dominance_duplicate_judgment_rejected():
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "s1", "s2", Outcome.A_WINS),
        judgment("e1", Criterion.SPECIFICITY, "s2", "s1", Outcome.TIE),
    ]
    with pytest.raises(DuplicateJudgment):
        dominance(judgments, Criterion.SPECIFICITY)


def test_dominance_table_render_contains_totals():
    table = DominanceTable.from_cells(("s1", "s2"), {("s1", "s2"): 1.0, ("s2", "s1"): 2.0})
    text = render_dominance_table(table)
    assert "Total" in text
    assert "2.00" in text and "1.00" in text
    assert "-" in text


def test_dominance_table_rejects_diagonal():
    with pytest.raises(ValueError):
        DominanceTable.from_cells(("s1", "s2"), {("s1", "s1"): 1.0})


def test_tie_rate():
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "a", "b", Outcome.TIE),
        judgment("e2", Criterion.SPECIFICITY, "a", "b", Outcome.A_WINS),
    ]
    assert tie_rate(judgments, Criterion.SPECIFICITY) == pytest.approx(50.0)
    with pytest.raises(ValueError):
        tie_rate([], Criterion.SPECIFICITY)


def test_kappa_matches_bruteforce_on_random_tables():
    rng = random.Random(11)
    for _ in range(100):
        n = rng.randint(2, 60)
        labels = ["AWins", "BWins", "Tie"]
        a = [rng.choice(labels) for _ in range(n)]
        b = [rng.choice(labels) for _ in range(n)]
        try:
            want = kappa_reference(a, b)
        except ValueError:
            with pytest.raises(DegenerateDistribution):
                cohen_kappa(a, b)
            continue
        assert cohen_kappa(a, b) == pytest.approx(want, abs=1e-12)


def test_kappa_errors():
    with pytest.raises(LengthMismatch):
        cohen_kappa(["Tie"], [])
    with pytest.raises(DegenerateDistribution):
        cohen_kappa(["Tie", "Tie"], ["Tie", "Tie"])


def test_kappa_tie_drop_modes():
    a = ["AWins", "Tie", "BWins", "Tie"]
    b = ["AWins", "BWins", "BWins", "Tie"]
    either = cohen_kappa(a, b, include_ties=False, tie_drop_mode="either")
    # either-mode keeps items 0 and 2 only: perfect agreement on 2 items
    assert either == pytest.approx(kappa_reference(["AWins", "BWins"], ["AWins", "BWins"]))
    mutual = cohen_kappa(a, b, include_ties=False, tie_drop_mode="mutual")
    assert mutual == pytest.approx(kappa_reference(
        ["AWins", "Tie", "BWins"], ["AWins", "BWins", "BWins"]))


def test_paired_outcomes_aligns_double_annotations():
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "a", "b", Outcome.A_WINS, annotator="ann2"),
        judgment("e1", Criterion.SPECIFICITY, "a", "b", Outcome.TIE, annotator="ann1"),
        judgment("e2", Criterion.SPECIFICITY, "a", "b", Outcome.B_WINS, annotator="ann1"),
    ]
    labels_a, labels_b = paired_outcomes(judgments)
    assert len(labels_a) == len(labels_b) == 1
    # lower annotator id goes first
    assert labels_a == [Outcome.TIE]
    assert labels_b == [Outcome.A_WINS]


def test_judgments_jsonl_round_trip(tmp_path):
    judgments = [
        judgment("e1", Criterion.SPECIFICITY, "a", "b", Outcome.A_WINS),
        judgment("e2", Criterion.HELPFULNESS, "a", "c", Outcome.TIE,
                 order=PresentationOrder.BA),
    ]
    path = tmp_path / "j.jsonl"
    save_judgments(judgments, path)
    assert load_judgments(path) == judgments
