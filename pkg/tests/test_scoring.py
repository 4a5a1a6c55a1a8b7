import math
import random

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fingereval.dimensions import ALL_DIMENSIONS, Dimension
from fingereval.errors import EmptyDimension, IdMismatch, MissingDimension, NoAnswerTokens, WeightSumInvalid
from fingereval.parse import Answer, TaggedResponse, parse_tagged, render_tagged
from fingereval.scoring import (
    DEFAULT_NO_TOKENS,
    DEFAULT_YES_TOKENS,
    AnswerDistribution,
    AnswerLogits,
    EntityQuestionRef,
    GroundTruth,
    LogitKind,
    ScoreMode,
    TokenSets,
    answer_accuracy,
    dimension_score,
    entity_score,
    normalized_view,
    overall_score,
    restricted_softmax,
    score_video,
    uniform_weights,
    validate_weights,
)
from oracles import mp_restricted_softmax

SETS = TokenSets()
YES, NO = set(DEFAULT_YES_TOKENS), set(DEFAULT_NO_TOKENS)


def logits(d: dict[str, float], kind=LogitKind.RAW_LOGIT) -> AnswerLogits:
    return AnswerLogits(tuple(d.items()), kind)


# token sets


def test_default_sets_have_five_variants_each():
    assert len(SETS.yes_tokens) == 5 and len(SETS.no_tokens) == 5
    assert not set(SETS.yes_tokens) & set(SETS.no_tokens)
    assert "Yes" in SETS.yes_tokens and " No" in SETS.no_tokens


def test_token_sets_reject_overlap_and_empty():
    with pytest.raises(ValueError):
        TokenSets(("Yes",), ("Yes", "No"))
    with pytest.raises(ValueError):
        TokenSets((), ("No",))


def test_token_sets_round_trip():
    s = TokenSets(("Y", "y", "Y"), ("N",))
    assert s.yes_tokens == ("Y", "y")
    assert TokenSets.from_dict(s.to_dict()) == s


# restricted softmax


def test_all_ten_equal_is_even():
    d = restricted_softmax(logits({t: 0.7 for t in (*DEFAULT_YES_TOKENS, *DEFAULT_NO_TOKENS)}))
    assert d.p_yes == 0.5 and d.p_no == 0.5 and d.coverage == 10


def test_four_token_example_against_mpmath():
    entries = {"Yes": 2.0, "yes": 1.0, "No": 0.5, "no": 0.0}
    d = restricted_softmax(logits(entries))
    ref_yes, ref_no = mp_restricted_softmax(entries, YES, NO)
    assert abs(d.p_yes - ref_yes) <= 1e-12 and abs(d.p_no - ref_no) <= 1e-12
    # the quoted 5-digit values are truncated, not rounded (true p_yes = 0.7923558...)
    assert abs(d.p_yes - 0.79235) < 1e-5 and abs(d.p_no - 0.20765) < 1e-5
    assert d.coverage == 4


def test_single_member():
    d = restricted_softmax(logits({"Yes": 3.0}))
    assert (d.p_yes, d.p_no, d.coverage) == (1.0, 0.0, 1)


def test_non_member_tokens_ignored():
    a = restricted_softmax(logits({"Yes": 1.0, "No": 0.0}))
    b = restricted_softmax(logits({"Yes": 1.0, "No": 0.0, "Maybe": 9.0, "the": 3.0}))
    assert a == b


def test_no_members_raises():
    with pytest.raises(NoAnswerTokens):
        restricted_softmax(logits({"Maybe": 1.0}))


def test_neg_inf_members_get_zero_mass():
    d = restricted_softmax(logits({"Yes": -math.inf, "No": -2.0}))
    assert d.p_yes == 0.0 and d.p_no == 1.0
    with pytest.raises(NoAnswerTokens):
        restricted_softmax(logits({"Yes": -math.inf, "No": -math.inf}))


def test_nan_rejected():
    with pytest.raises(ValueError):
        restricted_softmax(logits({"Yes": math.nan, "No": 0.0}))


def test_extreme_logits_are_stable():
    d = restricted_softmax(logits({"Yes": 1000.0, "No": -1000.0, " No": 999.0}))
    ref = mp_restricted_softmax({"Yes": 1000.0, "No": -1000.0, " No": 999.0}, YES, NO)
    assert abs(d.p_yes - ref[0]) <= 1e-15


def test_duplicate_tokens_rejected():
    with pytest.raises(ValueError):
        AnswerLogits((("Yes", 1.0), ("Yes", 2.0)))


def test_logprob_and_raw_logit_agree():
    raw = {"Yes": 2.0, " Yes": 0.5, "No": 1.0, "NO": -3.0}
    # log-softmax over a larger vocabulary only subtracts a constant
    lse = math.log(sum(math.exp(v) for v in raw.values()) + 12.0)
    lp = {t: v - lse for t, v in raw.items()}
    a = restricted_softmax(logits(raw))
    b = restricted_softmax(logits(lp, LogitKind.FULL_VOCAB_LOGPROB))
    assert abs(a.p_yes - b.p_yes) <= 1e-15


def test_from_records_layout():
    al = AnswerLogits.from_records([{"token": "Yes", "value": -0.1, "kind": "full_vocab_logprob"},
                                    {"token": "No", "value": -2.4, "kind": "full_vocab_logprob"}], "q1")
    assert al.kind is LogitKind.FULL_VOCAB_LOGPROB and al.question_id == "q1"
    with pytest.raises(ValueError):
        AnswerLogits.from_records([{"token": "Yes", "value": 0, "kind": "raw_logit"},
                                   {"token": "No", "value": 0, "kind": "full_vocab_logprob"}])


def test_matches_mpmath_on_random_sets():
    rng = random.Random(11)
    for _ in range(200):
        entries = {t: rng.gauss(0, 8) for t in (*DEFAULT_YES_TOKENS, *DEFAULT_NO_TOKENS) if rng.random() < 0.7}
        if not entries:
            continue
        d = restricted_softmax(logits(entries))
        ref = mp_restricted_softmax(entries, YES, NO)
        assert abs(d.p_yes - ref[0]) <= 1e-12 and abs(d.p_no - ref[1]) <= 1e-12


member = st.sampled_from((*DEFAULT_YES_TOKENS, *DEFAULT_NO_TOKENS))
logit_maps = st.dictionaries(member, st.floats(-50, 50), min_size=1)


@given(logit_maps)
def test_normalization(entries):
    d = restricted_softmax(logits(entries))
    assert abs(d.p_yes + d.p_no - 1) <= 1e-9
    assert 0 <= d.p_yes <= 1 and 0 <= d.p_no <= 1


@given(logit_maps, st.floats(-1e3, 1e3))
def test_shift_invariance(entries, c):
    a = restricted_softmax(logits(entries))
    b = restricted_softmax(logits({t: v + c for t, v in entries.items()}))
    assert abs(a.p_yes - b.p_yes) <= 1e-9


@given(st.dictionaries(member, st.floats(-10, 10)), st.sampled_from(DEFAULT_YES_TOKENS),
       st.sampled_from(DEFAULT_NO_TOKENS), st.floats(0.05, 5))
def test_raising_a_yes_logit_raises_p_yes(entries, tok, no_tok, bump):
    base = dict(entries)
    base.setdefault(tok, 0.0)
    base.setdefault(no_tok, 0.0)
    before = restricted_softmax(logits(base)).p_yes
    base[tok] += bump
    assert restricted_softmax(logits(base)).p_yes > before


# entity score


def test_entity_score_examples():
    d = AnswerDistribution(0.9, 1 - 0.9, 2)
    assert entity_score(d, 1) == 0.9
    assert entity_score(d, 0) == 1 - 0.9
    assert abs(entity_score(d, 0) - 0.1) < 1e-15
    half = AnswerDistribution(0.5, 0.5, 2)
    assert entity_score(half, 0) == entity_score(half, 1) == 0.5
    with pytest.raises(ValueError):
        entity_score(d, 2)


@given(logit_maps)
def test_polarity_duality_exact(entries):
    d = restricted_softmax(logits(entries))
    assert entity_score(d, 1) + entity_score(d, 0) == 1.0


# dimension and overall


def test_dimension_examples():
    assert dimension_score([1.0, 1.0, 1.0], ScoreMode.PAPER_LITERAL) == 3.0
    assert dimension_score([1.0, 1.0, 1.0], ScoreMode.NORMALIZED) == 1.0
    assert dimension_score([0.2, 0.8], "paper_literal") == 1.0
    with pytest.raises(EmptyDimension):
        dimension_score([], ScoreMode.NORMALIZED)


scores01 = st.lists(st.floats(0, 1), min_size=1, max_size=40)


@given(scores01)
def test_mode_consistency(xs):
    lit = dimension_score(xs, ScoreMode.PAPER_LITERAL)
    norm = dimension_score(xs, ScoreMode.NORMALIZED)
    assert norm * len(xs) == lit
    # the division form holds to the last bit or one ulp below/above
    assert abs(lit / len(xs) - norm) <= math.ulp(norm)
    assert abs(lit - math.fsum(xs)) <= math.ulp(lit)
    assert 0 <= norm <= 1 and lit <= len(xs)


def test_overall_examples():
    w = uniform_weights()
    assert overall_score({d: 1.0 for d in ALL_DIMENSIONS}, w) == (1.0, False)
    dims = dict(zip(ALL_DIMENSIONS, [0.5, 0.5, 0.5, 0.5, 1.0]))
    overall, partial = overall_score(dims, w)
    assert abs(overall - 0.6) <= 1e-15 and not partial


def test_overall_missing_dimension():
    dims = dict(zip(ALL_DIMENSIONS[:4], [0.2, 0.4, 0.6, 0.8]))
    overall, partial = overall_score(dims, uniform_weights(), ScoreMode.NORMALIZED)
    assert partial and abs(overall - 0.5) <= 1e-15
    with pytest.raises(MissingDimension):
        overall_score(dims, uniform_weights(), ScoreMode.PAPER_LITERAL)


def test_zero_weight_dimension_is_not_missing():
    w = {Dimension.VISUAL_QUALITY: 1.0, **{d: 0.0 for d in ALL_DIMENSIONS[1:]}}
    assert overall_score({Dimension.VISUAL_QUALITY: 0.3}, w, ScoreMode.PAPER_LITERAL) == (0.3, False)


def test_weight_validation():
    with pytest.raises(WeightSumInvalid):
        validate_weights({d: 0.25 for d in ALL_DIMENSIONS})
    with pytest.raises(WeightSumInvalid):
        validate_weights({**{d: 0.25 for d in ALL_DIMENSIONS[:4]}, ALL_DIMENSIONS[4]: 0.0, "visual_quality": -0.1})
    assert validate_weights({"visual-quality": 0.5, "dynamic degree": 0.5})[Dimension.DYNAMIC_DEGREE] == 0.5
    ok = {d: 0.2 + (1e-10 if d is ALL_DIMENSIONS[0] else 0.0) for d in ALL_DIMENSIONS}
    validate_weights(ok)


@given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.lists(st.floats(0.01, 1), min_size=5, max_size=5))
def test_normalized_overall_in_unit_interval(dims, raw_w):
    total = math.fsum(raw_w)
    w = {d: v / total for d, v in zip(ALL_DIMENSIONS, raw_w)}
    assume(abs(math.fsum(w.values()) - 1) <= 1e-9)
    overall, _ = overall_score(dict(zip(ALL_DIMENSIONS, dims)), w)
    assert -1e-12 <= overall <= 1 + 1e-12


# score_video


def q(qid: str, dim: Dimension, polarity: int = 1) -> EntityQuestionRef:
    return EntityQuestionRef(qid, dim, polarity)


def degenerate_logits(answer: Answer) -> AnswerLogits:
    toks = DEFAULT_YES_TOKENS if answer is Answer.YES else DEFAULT_NO_TOKENS
    return logits({toks[0]: 1.5, toks[4]: -0.5, "Maybe": 2.0})


def test_hard_mode_direction():
    tagged = lambda a: parse_tagged(render_tagged(a, "because"))  # noqa: E731
    items = [
        (q("a", Dimension.VISUAL_QUALITY, 1), tagged("Yes")),
        (q("b", Dimension.VISUAL_QUALITY, 0), tagged("Yes")),
        (q("c", Dimension.VISUAL_QUALITY, 0), tagged("No")),
        (q("d", Dimension.TEXT_ALIGNMENT, 1), parse_tagged("Yes")),
    ]
    tree = score_video(items, prob_mode=False)
    assert tree.entity_scores == {"a": 1.0, "b": 0.0, "c": 1.0, "d": 0.0}
    assert tree.dim_scores[Dimension.VISUAL_QUALITY] == 2 / 3
    assert tree.partial and not tree.prob_mode


def test_prob_mode_tree():
    items = [
        (q("a", Dimension.VISUAL_QUALITY, 1), logits({"Yes": 0.0, "No": 0.0})),
        (q("b", Dimension.VISUAL_QUALITY, 0), logits({"Yes": math.log(3), "No": 0.0})),
    ] + [(q(f"x{i}", d, 1), logits({"Yes": 5.0})) for i, d in enumerate(ALL_DIMENSIONS[1:])]
    tree = score_video(items, mode=ScoreMode.PAPER_LITERAL)
    assert abs(tree.entity_scores["b"] - 0.25) <= 1e-15
    assert abs(tree.dim_scores[Dimension.VISUAL_QUALITY] - 0.75) <= 1e-15
    assert tree.dim_counts[Dimension.VISUAL_QUALITY] == 2
    assert abs(tree.overall - 0.2 * (0.75 + 4)) <= 1e-15
    norm = normalized_view(tree)
    assert abs(norm.dim_scores[Dimension.VISUAL_QUALITY] - 0.375) <= 1e-15
    assert norm == score_video(items, mode=ScoreMode.NORMALIZED)


def test_score_video_errors_name_the_question():
    with pytest.raises(NoAnswerTokens, match="q-bad"):
        score_video([(q("q-bad", Dimension.VISUAL_QUALITY), logits({"Maybe": 1.0}))])
    with pytest.raises(TypeError, match="q-mixed"):
        score_video([(q("q-mixed", Dimension.VISUAL_QUALITY), parse_tagged("Yes"))], prob_mode=True)
    with pytest.raises(ValueError, match="twice"):
        item = (q("dup", Dimension.VISUAL_QUALITY), logits({"Yes": 1.0}))
        score_video([item, item])


@given(st.lists(st.tuples(st.sampled_from(ALL_DIMENSIONS), st.integers(0, 1), st.floats(-5, 5)),
                min_size=1, max_size=20), st.randoms())
def test_order_independence(spec, rnd):
    items = [(q(f"q{i}", d, p), logits({"Yes": v, "No": 0.0})) for i, (d, p, v) in enumerate(spec)]
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert score_video(items) == score_video(shuffled)


@given(st.lists(st.tuples(st.sampled_from(ALL_DIMENSIONS), st.integers(0, 1), st.sampled_from(list(Answer))),
                min_size=1, max_size=25), st.sampled_from(list(ScoreMode)))
def test_hard_soft_agreement(spec, mode):
    if mode is ScoreMode.PAPER_LITERAL:
        assume({d for d, _, _ in spec} == set(ALL_DIMENSIONS))
    soft = [(q(f"q{i}", d, p), degenerate_logits(a)) for i, (d, p, a) in enumerate(spec)]
    hard = [(q(f"q{i}", d, p), parse_tagged(render_tagged(a, "r"))) for i, (d, p, a) in enumerate(spec)]
    assert score_video(soft, mode=mode, prob_mode=True) == score_video(hard, mode=mode, prob_mode=False)


# accuracy


def test_answer_accuracy():
    gt = [GroundTruth(f"q{i}", a) for i, a in enumerate([Answer.YES, Answer.NO, Answer.YES, Answer.NO])]
    exact = {t.question_id: parse_tagged(render_tagged(t.answer, "r")) for t in gt}
    assert answer_accuracy(exact, gt) == 1.0
    three = dict(exact, q3=parse_tagged(render_tagged("Yes", "r")))
    assert answer_accuracy(three, gt) == 0.75
    invalid = dict(exact, q0=TaggedResponse("Yes", Answer.YES, None, False, ()))
    assert answer_accuracy(invalid, gt) == 0.75
    with pytest.raises(IdMismatch):
        answer_accuracy({"q0": exact["q0"]}, gt)
    with pytest.raises(IdMismatch):
        answer_accuracy({}, [])


def test_score_record_layout():
    items = [(q(f"q{i}", d), logits({"Yes": 0.0, "No": 0.0})) for i, d in enumerate(ALL_DIMENSIONS)]
    rec = score_video(items).to_record("v9")
    assert rec["video_id"] == "v9" and rec["mode"] == "normalized" and rec["overall"] == 0.5
    assert rec["visual_quality_count"] == 1 and set(rec["weights"]) == {d.value for d in ALL_DIMENSIONS}
    assert np.isclose(sum(rec["weights"].values()), 1.0)
