"""Schedule compilation: window placement, weights, boosts, lookups."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from segue.errors import CompileError, InputError, ParameterError
from segue.score import compile_score, params_at

from test_score import make_score


def test_reference_layout_ten_plus_ten():
    # 10 s + 10 s at 50 fps with a 4 s transition: 1000 frames total,
    # window frames 400..599, first and last weights 1/201 and 200/201.
    score = make_score([10.0, 10.0], [4.0])
    schedule = compile_score(score, 50.0)
    assert schedule.total_frames == 1000
    assert len(schedule.entries) == 1000
    assert len(schedule.windows) == 1
    window = schedule.windows[0]
    assert (window.start, window.end) == (400, 600)
    assert schedule.window_frame_count == 200
    assert schedule.entries[400].blend_weight == 1 / 201
    assert schedule.entries[599].blend_weight == 200 / 201
    assert schedule.entries[399].blend_weight == 0.0
    assert schedule.entries[600].blend_weight == 0.0
    assert schedule.entries[600].prompt_index_a == 1


def test_window_boost_values():
    score = make_score([10.0, 10.0], [4.0], base_temperature=0.8, base_top_k=100)
    schedule = compile_score(score, 50.0)
    inside = schedule.entries[500]
    outside = schedule.entries[100]
    assert inside.temperature == pytest.approx(0.8 * 1.5)
    assert inside.top_k == 200
    assert outside.temperature == 0.8
    assert outside.top_k == 100
    assert outside.prompt_index_b is None


def test_weights_strictly_increase_inside_window():
    schedule = compile_score(make_score([10.0, 10.0], [4.0]), 50.0)
    weights = [e.blend_weight for e in schedule.entries[400:600]]
    assert all(b > a for a, b in zip(weights, weights[1:]))
    assert all(0 < w < 1 for w in weights)


def test_active_prompt_sequence_is_non_decreasing():
    schedule = compile_score(make_score([6.0, 6.0, 6.0], [2.0, 2.0]), 50.0)
    indices = [e.prompt_index_a for e in schedule.entries]
    assert indices == sorted(indices)


def test_prompt_b_present_iff_blending():
    schedule = compile_score(make_score([6.0, 6.0], [2.0]), 50.0)
    for entry in schedule.entries:
        if entry.prompt_index_b is None:
            assert entry.blend_weight == 0.0
        else:
            assert 0.0 < entry.blend_weight < 1.0


def test_midpoint_of_odd_window_is_exactly_half():
    # 1.98 s at 50 fps is a 99-frame window; its middle frame blends at
    # exactly 0.5.
    score = make_score([10.0, 10.0], [1.98])
    schedule = compile_score(score, 50.0)
    window = schedule.windows[0]
    assert window.length == 99
    mid = window.start + (window.length - 1) // 2
    assert schedule.entries[mid].blend_weight == 0.5


def test_duration_conservation_with_fractional_segments():
    # Per-segment rounding would give 100+100; the schedule must match
    # round(total * rate) = 199.
    score = make_score([1.99, 1.99], [0.5])
    schedule = compile_score(score, 50.0)
    assert schedule.total_frames == round(3.98 * 50)


def test_boundary_handoff_frame():
    schedule = compile_score(make_score([6.0, 6.0], [2.0]), 50.0)
    window = schedule.windows[0]
    last = schedule.entries[window.end - 1]
    after = schedule.entries[window.end]
    assert last.prompt_index_b == 1
    assert after.prompt_index_a == 1
    assert after.prompt_index_b is None
    assert after.blend_weight == 0.0


def test_compile_requires_positive_frame_rate():
    with pytest.raises(ParameterError):
        compile_score(make_score([10.0]), 0.0)


def test_compile_rejects_invalid_score():
    with pytest.raises(CompileError):
        compile_score(make_score([10.0, 10.0], [6.0]), 50.0)


def test_compile_honors_override():
    schedule = compile_score(
        make_score([10.0, 10.0], [6.0]), 50.0, override_transition_limit=True
    )
    assert schedule.window_frame_count == 300


def test_compile_rejects_sub_frame_segment():
    with pytest.raises(CompileError):
        compile_score(make_score([0.004, 10.0], [0.001]), 50.0)


def test_overlapping_windows_rejected():
    # Valid in seconds (2.19 < 2.2) but the cumulative frame rounding
    # shaves the middle segment to 109 frames while each 2.19 s window
    # rounds to 110, so the two half-windows collide inside it.
    score = make_score([10.11, 2.2, 10.0], [2.19, 2.19])
    with pytest.raises(CompileError, match="overlap"):
        compile_score(score, 50.0)


def test_params_at_matches_entries_everywhere():
    score = make_score([5.0, 4.0, 6.0], [1.5, 2.0], base_top_k=64)
    schedule = compile_score(score, 50.0)
    for frame in range(schedule.total_frames):
        assert params_at(schedule, frame) == schedule.entries[frame]


def test_params_at_rejects_out_of_range():
    schedule = compile_score(make_score([5.0]), 50.0)
    with pytest.raises(InputError):
        params_at(schedule, -1)
    with pytest.raises(InputError):
        params_at(schedule, schedule.total_frames)


def test_params_at_frame_zero():
    schedule = compile_score(make_score([5.0, 5.0], [2.0]), 50.0)
    first = params_at(schedule, 0)
    assert first.blend_weight == 0.0
    assert first.prompt_index_a == 0
    assert first.prompt_index_b is None


def test_compile_is_deterministic():
    score = make_score([7.3, 5.1, 9.9], [2.0, 1.3], seed=5)
    assert compile_score(score, 50.0) == compile_score(score, 50.0)


@given(
    st.lists(st.floats(3.0, 30.0), min_size=1, max_size=5),
    st.floats(0.5, 2.9),
    st.sampled_from([25.0, 50.0, 75.0]),
)
def test_schedule_structure_properties(durations, transition_seconds, frame_rate):
    score = make_score(durations, [transition_seconds] * (len(durations) - 1))
    schedule = compile_score(score, frame_rate)

    assert schedule.total_frames == round(sum(durations) * frame_rate)
    assert len(schedule.entries) == schedule.total_frames

    # Window weights strictly increase and sit strictly inside (0, 1).
    for window in schedule.windows:
        weights = [schedule.entries[f].blend_weight for f in range(window.start, window.end)]
        assert all(0 < w < 1 for w in weights)
        assert all(b > a for a, b in zip(weights, weights[1:]))

    # Active prompt index never decreases, and every frame is accounted for.
    indices = [e.prompt_index_a for e in schedule.entries]
    assert indices == sorted(indices)
