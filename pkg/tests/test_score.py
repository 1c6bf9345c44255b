"""Score types, validation rules, and file round-tripping."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from segue.errors import ParseError
from segue.score import (
    Diagnostic,
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    has_errors,
    load_score,
    save_score,
    validate_score,
)


def make_score(durations, transition_seconds=None, **sampling):
    segments = tuple(
        Segment(Prompt(f"prompt {i}"), d) for i, d in enumerate(durations)
    )
    if transition_seconds is None:
        transitions = tuple(TransitionSpec() for _ in range(len(durations) - 1))
    else:
        transitions = tuple(
            TransitionSpec(duration_seconds=t) for t in transition_seconds
        )
    return Score(segments, transitions, SamplingConfig(**sampling))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_single_segment_is_clean():
    assert validate_score(make_score([30.0])) == []


def test_no_segments_is_an_error():
    diags = validate_score(Score(segments=(), transitions=()))
    assert has_errors(diags)
    assert diags[0].code == "empty-score"


def test_long_transition_is_an_error_citing_the_limit():
    diags = validate_score(make_score([10.0, 10.0], [6.0]))
    errors = [d for d in diags if d.severity == "error"]
    assert len(errors) == 1
    assert errors[0].code == "long-transition"
    assert "5-second" in errors[0].message


def test_long_transition_downgrades_to_warning_with_override():
    diags = validate_score(
        make_score([10.0, 10.0], [6.0]), override_transition_limit=True
    )
    assert not has_errors(diags)
    assert any(d.code == "long-transition" and d.severity == "warning" for d in diags)


def test_transition_must_be_shorter_than_both_neighbours():
    diags = validate_score(make_score([3.0, 3.0], [4.0]))
    assert any(d.code == "window-exceeds-segment" for d in diags)
    # Equality is also rejected.
    diags = validate_score(make_score([4.0, 8.0], [4.0]))
    assert any(d.code == "window-exceeds-segment" for d in diags)


def test_empty_prompt_is_an_error():
    score = Score((Segment(Prompt("   "), 10.0),), ())
    assert any(d.code == "empty-prompt" for d in validate_score(score))


def test_short_segment_is_a_warning():
    diags = validate_score(make_score([1.5]))
    assert not has_errors(diags)
    assert any(d.code == "short-segment" for d in diags)


def test_transition_count_mismatch():
    score = Score((Segment(Prompt("a"), 10.0), Segment(Prompt("b"), 10.0)), ())
    assert any(d.code == "transition-count" for d in validate_score(score))


def test_bad_sampling_values():
    score = make_score([10.0], base_temperature=0.0)
    assert has_errors(validate_score(score))
    score = make_score([10.0], base_top_k=0)
    assert has_errors(validate_score(score))
    score = make_score([10.0], mode="nucleus")
    assert has_errors(validate_score(score))


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

MINIMAL = '{"segments": [{"prompt": "calm piano", "duration_seconds": 30}]}'


def test_minimal_document_fills_defaults():
    score = load_score(MINIMAL)
    assert len(score.segments) == 1
    assert score.segments[0].prompt.text == "calm piano"
    assert score.segments[0].prompt.guidance_scale is None
    assert score.transitions == ()
    assert score.sampling == SamplingConfig()


def test_omitted_transitions_default_fill():
    doc = {
        "segments": [
            {"prompt": "a", "duration_seconds": 10},
            {"prompt": "b", "duration_seconds": 10},
            {"prompt": "c", "duration_seconds": 10},
        ]
    }
    score = load_score(json.dumps(doc))
    assert score.transitions == (TransitionSpec(), TransitionSpec())


def test_duplicate_field_is_a_parse_error():
    doc = '{"segments": [{"prompt": "a", "duration_seconds": 5, "duration_seconds": 6}]}'
    with pytest.raises(ParseError, match="duplicate"):
        load_score(doc)


def test_unknown_field_strict_vs_lenient():
    doc = '{"segments": [{"prompt": "a", "duration_seconds": 5}], "tempo": 120}'
    with pytest.raises(ParseError, match="tempo"):
        load_score(doc)
    warnings: list[Diagnostic] = []
    score = load_score(doc, strict=False, warnings=warnings)
    assert len(score.segments) == 1
    assert any("tempo" in w.message for w in warnings)


def test_malformed_json_reports_line():
    with pytest.raises(ParseError, match="line"):
        load_score('{"segments": [\n  {"prompt": }\n]}')


def test_field_locations_in_errors():
    doc = '{"segments": [{"prompt": "a", "duration_seconds": -2}]}'
    with pytest.raises(ParseError, match=r"segments\[0\].duration_seconds"):
        load_score(doc)


def test_empty_prompt_rejected_at_parse():
    doc = '{"segments": [{"prompt": "  ", "duration_seconds": 5}]}'
    with pytest.raises(ParseError, match="empty"):
        load_score(doc)


def test_transition_list_length_must_match():
    doc = {
        "segments": [
            {"prompt": "a", "duration_seconds": 10},
            {"prompt": "b", "duration_seconds": 10},
        ],
        "transitions": [{}, {}],
    }
    with pytest.raises(ParseError, match="transitions"):
        load_score(json.dumps(doc))


def test_long_transitions_parse_fine():
    # The 5-second rule is validation, not parsing: the file must load so
    # the validator can report it (and the override can downgrade it).
    doc = {
        "segments": [
            {"prompt": "a", "duration_seconds": 10},
            {"prompt": "b", "duration_seconds": 10},
        ],
        "transitions": [{"duration_seconds": 6.0}],
    }
    score = load_score(json.dumps(doc))
    assert has_errors(validate_score(score))


def test_bad_sampling_fields_rejected_at_parse():
    base = {"segments": [{"prompt": "a", "duration_seconds": 5}]}
    for sampling in (
        {"temperature": 0},
        {"top_k": 0},
        {"mode": "magic"},
        {"beam_width": 0},
        {"seed": -1},
        {"seed": 2**64},
        {"top_k": 1.5},
    ):
        with pytest.raises(ParseError):
            load_score(json.dumps({**base, "sampling": sampling}))


def test_guidance_scale_round_trip():
    doc = {
        "segments": [
            {"prompt": "a", "duration_seconds": 5, "guidance_scale": 3.5},
        ]
    }
    score = load_score(json.dumps(doc))
    assert score.segments[0].prompt.guidance_scale == 3.5
    assert load_score(save_score(score)) == score


@st.composite
def scores(draw):
    n = draw(st.integers(1, 4))
    segments = []
    for i in range(n):
        duration = draw(st.floats(2.0, 60.0, allow_nan=False, allow_infinity=False))
        guidance = draw(st.one_of(st.none(), st.floats(0.5, 10.0)))
        segments.append(Segment(Prompt(f"segment {i} text", guidance), duration))
    transitions = [
        TransitionSpec(
            duration_seconds=draw(st.floats(0.5, 5.0)),
            temperature_multiplier=draw(st.floats(1.0, 3.0)),
            top_k_multiplier=draw(st.floats(1.0, 4.0)),
        )
        for _ in range(n - 1)
    ]
    sampling = SamplingConfig(
        base_temperature=draw(st.floats(0.1, 4.0)),
        base_top_k=draw(st.integers(1, 500)),
        mode=draw(st.sampled_from(["sample", "greedy", "beam"])),
        beam_width=draw(st.integers(1, 8)),
        seed=draw(st.integers(0, 2**64 - 1)),
    )
    return Score(tuple(segments), tuple(transitions), sampling)


@given(scores())
def test_save_load_round_trip(score):
    assert load_score(save_score(score)) == score
