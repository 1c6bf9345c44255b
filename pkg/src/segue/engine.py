"""The decoding loop.

One generation stream drives one or two live backend contexts through a
compiled schedule. Every frame follows the same pipeline per channel:
softmax each live context's logits at the effective temperature, blend
the two distributions by the scheduled weight, apply top-K filtering,
then sample (or take the argmax, or expand beams). The sampled frame is
fed back to every live context so both conditionings always share the
same history.

Outside transition windows only the active context is queried; an
incoming context is opened as soon as the next window is within the
priming horizon, primed with the most recent history, and advanced (but
not queried) until its window starts. Total logits queries therefore
equal non-window frames plus twice the window frames.

Everything is deterministic for a fixed (score, seed, backend): the
engine's only randomness is one generator consumed exclusively by token
sampling, one uniform draw per channel per frame.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import distmath
from .backend import Backend, BackendInfo, ContextHandle
from .errors import BackendError, EngineError, ProtocolError
from .score import EffectiveParams, Score, Window, compile_score
from .tokenio import TokenFrame

log = logging.getLogger(__name__)

# 10 s of history at 50 frames/s; bounds the cost of opening a context.
DEFAULT_PRIMING_HORIZON = 500

# Beam mode refuses to expand more candidates than this per frame.
DEFAULT_CANDIDATE_CAP = 1_000_000

ProgressSink = Callable[[int, int, EffectiveParams], None]


@dataclass
class GenerationStats:
    """Backend call counts and per-window diagnostics for one run."""

    frame_count: int = 0
    window_frames: int = 0
    logits_calls: int = 0
    append_calls: int = 0
    contexts_created: int = 0
    contexts_freed: int = 0
    window_mean_entropy: tuple[float, ...] = ()
    mode: str = "sample"
    # Beam mode only: how many candidates each frame expanded.
    beam_candidate_counts: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "frame_count": self.frame_count,
            "window_frames": self.window_frames,
            "logits_calls": self.logits_calls,
            "append_calls": self.append_calls,
            "contexts_created": self.contexts_created,
            "contexts_freed": self.contexts_freed,
            "window_mean_entropy": list(self.window_mean_entropy),
            "mode": self.mode,
            "beam_candidate_counts": list(self.beam_candidate_counts),
        }


@dataclass
class GenerationResult:
    frames: tuple[TokenFrame, ...]
    per_frame_params: tuple[EffectiveParams, ...]
    stats: GenerationStats
    truncated: bool = False
    failure: str | None = None
    # Final per-channel sampling distribution of each frame; populated
    # only when generate(..., keep_distributions=True).
    distributions: tuple[tuple[np.ndarray, ...], ...] | None = None


@dataclass
class DecodeState:
    """Mutable state of one generation stream."""

    backend_info: BackendInfo
    rng: np.random.Generator
    mode: str
    frame_index: int = 0
    history: list[TokenFrame] = field(default_factory=list)
    context_a: ContextHandle | None = None
    context_b: ContextHandle | None = None
    # Prompt indices currently bound to each context, for consistency checks.
    prompt_a: int | None = None
    prompt_b: int | None = None
    last_distributions: tuple[np.ndarray, ...] = ()
    stats: GenerationStats = field(default_factory=GenerationStats)
    # Beam mode only: the live hypotheses, best first.
    beams: "list[_Beam] | None" = None


def _softmax_rows(matrix: np.ndarray, temperature: float) -> list[np.ndarray]:
    return [distmath.softmax(row, temperature) for row in matrix]


def _query(state: DecodeState, backend: Backend, ctxs: Sequence[ContextHandle]) -> list[np.ndarray]:
    matrices = backend.logits_many(ctxs)
    state.stats.logits_calls += len(ctxs)
    expected = (state.backend_info.channels, state.backend_info.vocab_size)
    for matrix in matrices:
        if matrix.shape != expected:
            raise ProtocolError(f"logits shape {matrix.shape}, declared {expected}")
    return matrices


def sampling_distributions(
    state: DecodeState, params: EffectiveParams, backend: Backend
) -> tuple[np.ndarray, ...]:
    """Final per-channel sampling distributions for the current frame:
    per-context softmax at the effective temperature, blended by the
    scheduled weight, then top-K filtered."""
    if params.blend_weight == 0.0 or params.prompt_index_b is None:
        if state.context_a is None:
            raise EngineError("no active context")
        (matrix,) = _query(state, backend, [state.context_a])
        blended = _softmax_rows(matrix, params.temperature)
    else:
        if state.context_a is None or state.context_b is None:
            raise EngineError("window frame reached without both contexts live")
        matrix_a, matrix_b = _query(state, backend, [state.context_a, state.context_b])
        rows_a = _softmax_rows(matrix_a, params.temperature)
        rows_b = _softmax_rows(matrix_b, params.temperature)
        blended = [
            distmath.blend(pa, pb, params.blend_weight) for pa, pb in zip(rows_a, rows_b)
        ]
    return tuple(distmath.top_k_filter(row, params.top_k) for row in blended)


def _append_to_live(state: DecodeState, backend: Backend, frame: TokenFrame) -> None:
    for ctx in (state.context_a, state.context_b):
        if ctx is not None:
            backend.append(ctx, [frame])
            state.stats.append_calls += 1


def step(state: DecodeState, params: EffectiveParams, backend: Backend) -> TokenFrame:
    """Sample one frame and feed it back to every live context.

    At blend weight 0 only the active context is queried; an incoming
    context that is live for priming is advanced but not queried.
    """
    dists = sampling_distributions(state, params, backend)
    if state.mode == "greedy":
        tokens = tuple(distmath.argmax(d) for d in dists)
    else:
        tokens = tuple(distmath.sample(d, state.rng) for d in dists)
    frame = TokenFrame(tokens)
    _append_to_live(state, backend, frame)
    state.history.append(frame)
    state.frame_index += 1
    state.last_distributions = dists
    return frame


def open_incoming_context(
    state: DecodeState,
    next_prompt_index: int,
    score: Score,
    backend: Backend,
    priming_horizon_frames: int = DEFAULT_PRIMING_HORIZON,
) -> None:
    """Create the incoming prompt's context and prime it with the most
    recent min(history, horizon) frames, so both conditionings share the
    same history suffix before blending starts."""
    if state.context_b is not None:
        raise EngineError("incoming context already open")
    prompt = score.segments[next_prompt_index].prompt
    ctx = backend.new_context(prompt)
    state.stats.contexts_created += 1
    primer = state.history[-priming_horizon_frames:] if priming_horizon_frames > 0 else []
    if primer:
        backend.append(ctx, primer)
        state.stats.append_calls += 1
    state.context_b = ctx
    state.prompt_b = next_prompt_index


def _free(state: DecodeState, backend: Backend, ctx: ContextHandle) -> None:
    backend.free_context(ctx)
    state.stats.contexts_freed += 1


def generate(
    score: Score,
    backend: Backend,
    progress_sink: ProgressSink | None = None,
    *,
    priming_horizon_frames: int = DEFAULT_PRIMING_HORIZON,
    keep_distributions: bool = False,
    override_transition_limit: bool = False,
) -> GenerationResult:
    """Run a full generation pass over the compiled schedule.

    Returns a result with exactly ``schedule.total_frames`` frames, or a
    result flagged ``truncated`` carrying the frames produced so far if
    the backend fails mid-run. Beam mode dispatches to beam_generate.
    """
    if score.sampling.mode == "beam":
        return beam_generate(
            score,
            backend,
            progress_sink,
            priming_horizon_frames=priming_horizon_frames,
            override_transition_limit=override_transition_limit,
        )
    info = backend.handshake()
    schedule = compile_score(
        score, info.frame_rate, override_transition_limit=override_transition_limit
    )

    state = DecodeState(
        backend_info=info,
        rng=np.random.default_rng(score.sampling.seed),
        mode=score.sampling.mode,
    )
    state.stats.mode = score.sampling.mode
    state.stats.window_frames = schedule.window_frame_count

    kept: list[tuple[np.ndarray, ...]] = []
    window_entropies: list[list[float]] = [[] for _ in schedule.windows]
    upcoming: list[Window] = list(schedule.windows)
    window_no = -1
    current: Window | None = None
    failure: str | None = None

    try:
        state.context_a = backend.new_context(score.segments[0].prompt)
        state.prompt_a = 0
        state.stats.contexts_created += 1

        for frame_index in range(schedule.total_frames):
            params = schedule.entries[frame_index]

            # Hand off at the first post-window frame: the incoming
            # context becomes the sole conditioning.
            if current is not None and frame_index >= current.end:
                assert state.context_a is not None
                _free(state, backend, state.context_a)
                state.context_a = state.context_b
                state.prompt_a = state.prompt_b
                state.context_b = None
                state.prompt_b = None
                current = None

            if current is None and upcoming and frame_index >= upcoming[0].start:
                current = upcoming.pop(0)
                window_no += 1

            # Open the incoming context once its window is within the
            # priming horizon (or immediately if we are already inside).
            if state.context_b is None:
                next_window = current if current is not None else (upcoming[0] if upcoming else None)
                if next_window is not None and next_window.start - frame_index <= priming_horizon_frames:
                    open_incoming_context(
                        state,
                        next_window.incoming,
                        score,
                        backend,
                        priming_horizon_frames,
                    )

            if state.prompt_a != params.prompt_index_a:
                raise EngineError(
                    f"frame {frame_index}: active context holds prompt {state.prompt_a}, "
                    f"schedule expects {params.prompt_index_a}"
                )

            frame = step(state, params, backend)
            if keep_distributions:
                kept.append(state.last_distributions)
            if current is not None:
                mean_entropy = float(
                    np.mean([distmath.entropy(d) for d in state.last_distributions])
                )
                window_entropies[window_no].append(mean_entropy)
            if progress_sink is not None:
                progress_sink(frame_index, schedule.total_frames, params)
    except BackendError as exc:
        failure = f"{type(exc).__name__}: {exc}"
        log.warning("generation truncated at frame %d: %s", state.frame_index, failure)

    state.stats.frame_count = len(state.history)
    state.stats.window_mean_entropy = tuple(
        float(np.mean(values)) for values in window_entropies if values
    )

    produced = len(state.history)
    return GenerationResult(
        frames=tuple(state.history),
        per_frame_params=tuple(schedule.entries[:produced]),
        stats=state.stats,
        truncated=failure is not None,
        failure=failure,
        distributions=tuple(kept) if keep_distributions else None,
    )


# ---------------------------------------------------------------------------
# Beam search.
# ---------------------------------------------------------------------------


@dataclass
class _Beam:
    history: list[TokenFrame]
    log_prob: float
    entropies: list[float]


def _beam_distributions(
    history: list[TokenFrame],
    params: EffectiveParams,
    score: Score,
    backend: Backend,
    state: DecodeState,
    priming_horizon_frames: int,
) -> tuple[np.ndarray, ...]:
    """Per-channel sampling distributions for one beam's history.

    The wire protocol has no context fork, so each beam's context is
    recreated from its history suffix (bounded by the priming horizon)
    and freed right after the query.
    """
    suffix = history[-priming_horizon_frames:] if priming_horizon_frames > 0 else []

    def with_context(prompt_index: int) -> np.ndarray:
        ctx = backend.new_context(score.segments[prompt_index].prompt)
        state.stats.contexts_created += 1
        if suffix:
            backend.append(ctx, suffix)
            state.stats.append_calls += 1
        (matrix,) = _query(state, backend, [ctx])
        _free(state, backend, ctx)
        return matrix

    matrix_a = with_context(params.prompt_index_a)
    rows = _softmax_rows(matrix_a, params.temperature)
    if params.prompt_index_b is not None and params.blend_weight > 0.0:
        matrix_b = with_context(params.prompt_index_b)
        rows_b = _softmax_rows(matrix_b, params.temperature)
        rows = [distmath.blend(pa, pb, params.blend_weight) for pa, pb in zip(rows, rows_b)]
    return tuple(distmath.top_k_filter(row, params.top_k) for row in rows)


def beam_generate(
    score: Score,
    backend: Backend,
    progress_sink: ProgressSink | None = None,
    *,
    priming_horizon_frames: int = DEFAULT_PRIMING_HORIZON,
    override_transition_limit: bool = False,
    candidate_cap: int = DEFAULT_CANDIDATE_CAP,
) -> GenerationResult:
    """Beam-search decoding over the blended per-channel distributions.

    Each step expands every beam over the top K tokens of each channel's
    blended distribution (K doubled inside windows by the schedule),
    scores candidates by cumulative log-probability, and keeps the best
    beam_width of them; ties break toward the lower token tuple, then the
    older beam. Returns the best-scoring completed beam. With
    beam_width=1 this degenerates to greedy decoding.
    """
    info = backend.handshake()
    schedule = compile_score(
        score, info.frame_rate, override_transition_limit=override_transition_limit
    )
    width = score.sampling.beam_width

    state = DecodeState(
        backend_info=info,
        rng=np.random.default_rng(score.sampling.seed),
        mode="beam",
    )
    state.stats.mode = "beam"
    state.stats.window_frames = schedule.window_frame_count

    beams = [_Beam(history=[], log_prob=0.0, entropies=[])]
    state.beams = beams
    candidate_counts: list[int] = []
    failure: str | None = None
    frames_done = 0

    try:
        for frame_index in range(schedule.total_frames):
            params = schedule.entries[frame_index]
            per_channel_count = min(params.top_k, info.vocab_size)
            expansion = len(beams) * per_channel_count**info.channels
            if expansion > candidate_cap:
                raise EngineError(
                    f"beam expansion of {expansion} candidates exceeds the cap "
                    f"({candidate_cap}); lower top_k, beam_width, or channels"
                )

            candidates: list[tuple[float, tuple[int, ...], int, float]] = []
            for beam_pos, beam in enumerate(beams):
                dists = _beam_distributions(
                    beam.history, params, score, backend, state, priming_horizon_frames
                )
                mean_entropy = float(np.mean([distmath.entropy(d) for d in dists]))
                per_channel: list[list[tuple[int, float]]] = []
                for dist in dists:
                    order = np.argsort(-dist, kind="stable")[:per_channel_count]
                    kept = [int(token) for token in order]
                    kept.sort()
                    per_channel.append(
                        [
                            (token, float(np.log(dist[token])) if dist[token] > 0 else -np.inf)
                            for token in kept
                        ]
                    )
                for combo in itertools.product(*per_channel):
                    tokens = tuple(token for token, _ in combo)
                    log_prob = beam.log_prob + sum(lp for _, lp in combo)
                    candidates.append((log_prob, tokens, beam_pos, mean_entropy))

            candidate_counts.append(len(candidates))
            # Rank: highest cumulative log-probability first; ties prefer
            # the lower token tuple, then the older (better-ranked) beam.
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            next_beams = []
            for log_prob, tokens, beam_pos, mean_entropy in candidates[:width]:
                parent = beams[beam_pos]
                next_beams.append(
                    _Beam(
                        history=parent.history + [TokenFrame(tokens)],
                        log_prob=log_prob,
                        entropies=parent.entropies + [mean_entropy],
                    )
                )
            beams = next_beams
            state.beams = beams
            frames_done = frame_index + 1
            if progress_sink is not None:
                progress_sink(frame_index, schedule.total_frames, params)
    except BackendError as exc:
        failure = f"{type(exc).__name__}: {exc}"
        log.warning("beam generation truncated at frame %d: %s", frames_done, failure)

    best = beams[0]
    window_entropy = []
    for window in schedule.windows:
        values = best.entropies[window.start : min(window.end, len(best.entropies))]
        if values:
            window_entropy.append(float(np.mean(values)))
    state.stats.frame_count = len(best.history)
    state.stats.window_mean_entropy = tuple(window_entropy)
    state.stats.beam_candidate_counts = tuple(candidate_counts)

    return GenerationResult(
        frames=tuple(best.history),
        per_frame_params=tuple(schedule.entries[: len(best.history)]),
        stats=state.stats,
        truncated=failure is not None,
        failure=failure,
    )
