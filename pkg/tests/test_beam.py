"""Beam search against exhaustive enumeration on tiny vocabularies."""

import itertools

import numpy as np
import pytest

from segue.engine import beam_generate, generate
from segue.errors import EngineError, ProtocolError
from segue.mockbackend import MockBackend, MockModel
from segue.score import (
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    compile_score,
)


def tiny_score(beam_width, base_top_k=4, mode="beam"):
    """3 frames at 50 fps over V=4: frames 0 and 2 are pure, frame 1
    blends alpha/beta at weight 0.5."""
    return Score(
        segments=(
            Segment(Prompt("alpha"), 0.04),
            Segment(Prompt("beta"), 0.02),
        ),
        transitions=(TransitionSpec(duration_seconds=0.019),),
        sampling=SamplingConfig(
            mode=mode, beam_width=beam_width, base_top_k=base_top_k, seed=0
        ),
    )


def tiny_backend(channels=1):
    return MockBackend(MockModel(vocab_size=4, channels=channels, bias_size=2))


# ---------------------------------------------------------------------------
# independent oracle: enumerate every token sequence and score it with
# hand-rolled arithmetic (same formulas, written out locally).
# ---------------------------------------------------------------------------


def oracle_distributions(model, params, last_tokens):
    """Per-channel sampling distributions, recomputed from scratch."""
    out = []
    for channel in range(model.channels):
        last = last_tokens[channel] if last_tokens is not None else None

        def soft(prompt):
            x = model.logits_row(prompt, last) / params.temperature
            x = x - x.max()
            e = np.exp(x)
            return e / e.sum()

        dist = soft("alpha" if params.prompt_index_a == 0 else "beta")
        if params.prompt_index_b is not None:
            other = soft("alpha" if params.prompt_index_b == 0 else "beta")
            dist = (1.0 - params.blend_weight) * dist + params.blend_weight * other
        k = params.top_k
        if k < len(dist):
            order = np.argsort(-dist, kind="stable")
            keep = np.zeros_like(dist)
            keep[order[:k]] = dist[order[:k]]
            dist = keep / keep.sum()
        out.append(dist)
    return out


def exhaustive_best(model, schedule):
    """Highest cumulative log-probability sequence, ties to the lexico-
    graphically smallest token tuple sequence."""
    frames = schedule.total_frames
    combos = list(itertools.product(range(model.vocab_size), repeat=model.channels))
    best = None
    for seq in itertools.product(combos, repeat=frames):
        log_prob = 0.0
        last = None
        for frame_index, tokens in enumerate(seq):
            dists = oracle_distributions(model, schedule.entries[frame_index], last)
            for channel, token in enumerate(tokens):
                value = dists[channel][token]
                log_prob = log_prob + (float(np.log(value)) if value > 0 else -np.inf)
            last = tokens
        key = (-log_prob, seq)
        if best is None or key < best[0]:
            best = (key, seq, log_prob)
    return best[1], best[2]


# ---------------------------------------------------------------------------


def test_beam_width_one_equals_greedy():
    greedy = generate(tiny_score(beam_width=1, mode="greedy"), tiny_backend())
    beam = beam_generate(tiny_score(beam_width=1), tiny_backend())
    assert beam.frames == greedy.frames


def test_beam_width_one_equals_greedy_on_larger_mock():
    score = Score(
        segments=(Segment(Prompt("alpha"), 2.0), Segment(Prompt("beta"), 2.0)),
        transitions=(TransitionSpec(duration_seconds=1.0),),
        sampling=SamplingConfig(mode="greedy", base_top_k=64),
    )
    greedy = generate(score, MockBackend())
    beam_score = Score(
        score.segments,
        score.transitions,
        SamplingConfig(mode="beam", beam_width=1, base_top_k=64),
    )
    beam = beam_generate(beam_score, MockBackend())
    assert beam.frames == greedy.frames


def test_beam_is_deterministic():
    a = beam_generate(tiny_score(beam_width=3), tiny_backend())
    b = beam_generate(tiny_score(beam_width=3), tiny_backend())
    assert a.frames == b.frames
    assert a.stats == b.stats


def test_beam_matches_exhaustive_search():
    # 4^3 = 64 sequences; a width-64 beam can never prune the optimum.
    score = tiny_score(beam_width=64)
    backend = tiny_backend()
    result = beam_generate(score, backend)
    model = MockModel(vocab_size=4, bias_size=2)
    schedule = compile_score(score, 50.0)
    best_seq, best_log_prob = exhaustive_best(model, schedule)
    assert tuple(f.channels for f in result.frames) == best_seq
    assert len(result.frames) == 3


def test_beam_matches_exhaustive_search_two_channels():
    # Joint scoring across channels: 16 combos per frame, 2 frames.
    score = Score(
        segments=(
            Segment(Prompt("alpha"), 0.02),
            Segment(Prompt("beta"), 0.02),
        ),
        transitions=(TransitionSpec(duration_seconds=0.019),),
        sampling=SamplingConfig(mode="beam", beam_width=256, base_top_k=4, seed=0),
    )
    model = MockModel(vocab_size=4, channels=2, bias_size=2)
    backend = MockBackend(model)
    result = beam_generate(score, backend)
    schedule = compile_score(score, 50.0)
    best_seq, _ = exhaustive_best(model, schedule)
    assert tuple(f.channels for f in result.frames) == best_seq


def test_candidate_expansion_doubles_inside_window():
    # base_top_k=2 becomes 4 inside the window, so each beam expands
    # over 4 tokens there and 2 tokens elsewhere.
    score = tiny_score(beam_width=2, base_top_k=2)
    result = beam_generate(score, tiny_backend())
    assert result.stats.beam_candidate_counts == (2, 8, 4)


def test_candidate_cap_trips_loudly():
    with pytest.raises(EngineError, match="cap"):
        beam_generate(tiny_score(beam_width=4), tiny_backend(), candidate_cap=3)


def test_beam_truncates_on_backend_failure():
    class FailingBackend(MockBackend):
        def logits(self, ctx):
            if self.calls["logits"] >= 3:
                raise ProtocolError("boom")
            return super().logits(ctx)

    result = beam_generate(tiny_score(beam_width=2), FailingBackend(MockModel(4, bias_size=2)))
    assert result.truncated
    assert len(result.frames) < 3


def test_generate_dispatches_beam_mode():
    via_generate = generate(tiny_score(beam_width=8), tiny_backend())
    direct = beam_generate(tiny_score(beam_width=8), tiny_backend())
    assert via_generate.frames == direct.frames
    assert via_generate.stats.mode == "beam"
