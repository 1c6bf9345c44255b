"""Composition-level score format and its frame-exact schedule compiler.

A Score is an ordered list of (prompt, duration) segments plus per-boundary
transition settings and sampling configuration. Compilation turns it into a
Schedule: one EffectiveParams entry per token frame, where transition
windows carry a strictly increasing blend weight and boosted temperature /
top-K values, and all other frames carry the base sampling parameters.

Scores and Schedules are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable

from .errors import CompileError, InputError, ParameterError, ParseError

# Transitions beyond this many seconds are rejected unless explicitly
# overridden; longer windows are known to produce audible artifacts.
TRANSITION_LIMIT_SECONDS = 5.0

DEFAULT_TRANSITION_SECONDS = 4.0
DEFAULT_TEMPERATURE_MULTIPLIER = 1.5
DEFAULT_TOP_K_MULTIPLIER = 2.0
DEFAULT_BASE_TEMPERATURE = 1.0
DEFAULT_BASE_TOP_K = 250
DEFAULT_BEAM_WIDTH = 4
DEFAULT_SEED = 0

SAMPLING_MODES = ("sample", "greedy", "beam")

# Segments shorter than this draw a warning: there is barely room to
# establish the prompt before the next transition starts eating into it.
SHORT_SEGMENT_SECONDS = 2.0


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding. ``severity`` is "error" or "warning"."""

    severity: str
    code: str
    message: str
    location: str | None = None

    def __str__(self) -> str:
        loc = f" [{self.location}]" if self.location else ""
        return f"{self.severity}: {self.message}{loc}"


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


@dataclass(frozen=True)
class Prompt:
    """A text conditioning plus an optional guidance scale passed through
    verbatim to the backend."""

    text: str
    guidance_scale: float | None = None


@dataclass(frozen=True)
class Segment:
    prompt: Prompt
    duration_seconds: float


@dataclass(frozen=True)
class TransitionSpec:
    """Settings for one boundary between consecutive segments."""

    duration_seconds: float = DEFAULT_TRANSITION_SECONDS
    temperature_multiplier: float = DEFAULT_TEMPERATURE_MULTIPLIER
    top_k_multiplier: float = DEFAULT_TOP_K_MULTIPLIER


@dataclass(frozen=True)
class SamplingConfig:
    base_temperature: float = DEFAULT_BASE_TEMPERATURE
    base_top_k: int = DEFAULT_BASE_TOP_K
    mode: str = "sample"
    beam_width: int = DEFAULT_BEAM_WIDTH
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class Score:
    """The user-facing composition: segments, transitions, sampling."""

    segments: tuple[Segment, ...]
    transitions: tuple[TransitionSpec, ...] = ()
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "transitions", tuple(self.transitions))

    @property
    def total_duration_seconds(self) -> float:
        return sum(s.duration_seconds for s in self.segments)


@dataclass(frozen=True)
class EffectiveParams:
    """Decoding parameters in force for one frame.

    ``prompt_index_b`` is present exactly when the frame sits inside a
    transition window (0 < blend_weight < 1); otherwise ``blend_weight``
    is 0 and only ``prompt_index_a`` conditions the frame.
    """

    prompt_index_a: int
    prompt_index_b: int | None
    blend_weight: float
    temperature: float
    top_k: int


@dataclass(frozen=True)
class Window:
    """One transition window: frames [start, end) blending ``outgoing``
    into ``incoming`` with weight (i+1)/(length+1) at window-local i."""

    start: int
    end: int
    outgoing: int
    incoming: int
    temperature: float
    top_k: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Schedule:
    """Frame-indexed table of effective decoding parameters."""

    total_frames: int
    frame_rate: float
    entries: tuple[EffectiveParams, ...]
    windows: tuple[Window, ...]
    segment_boundaries: tuple[int, ...]  # len(segments)+1 cumulative frames
    base_temperature: float
    base_top_k: int

    @property
    def window_frame_count(self) -> int:
        return sum(w.length for w in self.windows)

    @cached_property
    def _window_starts(self) -> tuple[int, ...]:
        return tuple(w.start for w in self.windows)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def validate_score(score: Score, *, override_transition_limit: bool = False) -> list[Diagnostic]:
    """Check a score against the composition rules.

    Returns diagnostics rather than raising; a score is usable iff no
    diagnostic has severity "error". ``override_transition_limit``
    downgrades the transition-length limit from an error to a warning.
    """
    out: list[Diagnostic] = []

    def error(code: str, message: str, location: str | None = None) -> None:
        out.append(Diagnostic("error", code, message, location))

    def warning(code: str, message: str, location: str | None = None) -> None:
        out.append(Diagnostic("warning", code, message, location))

    if len(score.segments) == 0:
        error("empty-score", "score has no segments")
        return out

    for i, seg in enumerate(score.segments):
        loc = f"segments[{i}]"
        if not seg.prompt.text.strip():
            error("empty-prompt", "prompt text is empty", f"{loc}.prompt")
        gs = seg.prompt.guidance_scale
        if gs is not None and not gs > 0:
            error("bad-guidance", f"guidance_scale must be > 0, got {gs}", f"{loc}.guidance_scale")
        if not seg.duration_seconds > 0:
            error(
                "bad-duration",
                f"segment duration must be > 0, got {seg.duration_seconds}",
                f"{loc}.duration_seconds",
            )
        elif seg.duration_seconds < SHORT_SEGMENT_SECONDS:
            warning(
                "short-segment",
                f"segment lasts only {seg.duration_seconds:g} s; transitions may dominate it",
                f"{loc}.duration_seconds",
            )

    if len(score.transitions) != len(score.segments) - 1:
        error(
            "transition-count",
            f"expected {len(score.segments) - 1} transitions for "
            f"{len(score.segments)} segments, got {len(score.transitions)}",
            "transitions",
        )
        return out

    for i, tr in enumerate(score.transitions):
        loc = f"transitions[{i}]"
        if not tr.duration_seconds > 0:
            error(
                "bad-duration",
                f"transition duration must be > 0, got {tr.duration_seconds}",
                f"{loc}.duration_seconds",
            )
            continue
        if tr.duration_seconds > TRANSITION_LIMIT_SECONDS:
            msg = (
                f"transition lasts {tr.duration_seconds:g} s, beyond the 5-second limit; "
                "longer windows risk audible artifacts"
            )
            if override_transition_limit:
                warning("long-transition", msg + " (limit override active)", loc)
            else:
                error("long-transition", msg, loc)
        if tr.temperature_multiplier < 1:
            error(
                "bad-multiplier",
                f"temperature_multiplier must be >= 1, got {tr.temperature_multiplier}",
                f"{loc}.temperature_multiplier",
            )
        if tr.top_k_multiplier < 1:
            error(
                "bad-multiplier",
                f"top_k_multiplier must be >= 1, got {tr.top_k_multiplier}",
                f"{loc}.top_k_multiplier",
            )
        before = score.segments[i].duration_seconds
        after = score.segments[i + 1].duration_seconds
        if before > 0 and after > 0 and tr.duration_seconds >= min(before, after):
            error(
                "window-exceeds-segment",
                f"transition of {tr.duration_seconds:g} s cannot fit between segments "
                f"of {before:g} s and {after:g} s; it must be shorter than both",
                loc,
            )

    sp = score.sampling
    if not sp.base_temperature > 0:
        error("bad-sampling", f"temperature must be > 0, got {sp.base_temperature}", "sampling.temperature")
    if sp.base_top_k < 1:
        error("bad-sampling", f"top_k must be >= 1, got {sp.base_top_k}", "sampling.top_k")
    if sp.mode not in SAMPLING_MODES:
        error("bad-sampling", f"mode must be one of {SAMPLING_MODES}, got {sp.mode!r}", "sampling.mode")
    if sp.beam_width < 1:
        error("bad-sampling", f"beam_width must be >= 1, got {sp.beam_width}", "sampling.beam_width")
    if not (0 <= sp.seed < 2**64):
        error("bad-sampling", f"seed must fit in 64 unsigned bits, got {sp.seed}", "sampling.seed")

    return out


def compile_score(
    score: Score,
    frame_rate: float,
    *,
    override_transition_limit: bool = False,
) -> Schedule:
    """Lay a validated score out as a per-frame parameter schedule.

    Segment boundaries are placed by rounding the cumulative duration to
    the nearest frame (half-up), so the total frame count always equals
    round(total_duration * frame_rate) with no per-segment drift. Each
    transition becomes a window of round(duration * frame_rate) frames
    centered on its boundary (ceil(n/2) before, floor(n/2) after); frame i
    inside a window of n frames blends with weight (i+1)/(n+1), and the
    window's frames carry base_temperature * temperature_multiplier and
    round(base_top_k * top_k_multiplier).
    """
    if not frame_rate > 0:
        raise ParameterError(f"frame_rate must be > 0, got {frame_rate}")
    diagnostics = validate_score(score, override_transition_limit=override_transition_limit)
    if has_errors(diagnostics):
        details = "; ".join(str(d) for d in diagnostics if d.severity == "error")
        raise CompileError(f"score does not validate: {details}")

    boundaries = [0]
    cumulative = 0.0
    for seg in score.segments:
        cumulative += seg.duration_seconds
        boundaries.append(_round_half_up(cumulative * frame_rate))
    total_frames = boundaries[-1]
    for k in range(len(score.segments)):
        if boundaries[k + 1] <= boundaries[k]:
            raise CompileError(
                f"segment {k} is shorter than one frame at {frame_rate:g} frames/s"
            )

    sp = score.sampling
    windows: list[Window] = []
    for k, tr in enumerate(score.transitions):
        n = _round_half_up(tr.duration_seconds * frame_rate)
        if n == 0:
            continue  # shorter than half a frame: degenerates to a hard cut
        boundary = boundaries[k + 1]
        start = boundary - math.ceil(n / 2)
        end = boundary + n // 2
        if start < boundaries[k] or end > boundaries[k + 2]:
            raise CompileError(
                f"transition {k} window [{start}, {end}) spills outside its adjacent segments"
            )
        if windows and start < windows[-1].end:
            raise CompileError(
                f"transition {k} window [{start}, {end}) overlaps the previous window "
                f"[{windows[-1].start}, {windows[-1].end})"
            )
        windows.append(
            Window(
                start=start,
                end=end,
                outgoing=k,
                incoming=k + 1,
                temperature=sp.base_temperature * tr.temperature_multiplier,
                top_k=max(1, _round_half_up(sp.base_top_k * tr.top_k_multiplier)),
            )
        )

    entries: list[EffectiveParams] = []
    window_index = 0
    for frame in range(total_frames):
        while window_index < len(windows) and frame >= windows[window_index].end:
            window_index += 1
        win = windows[window_index] if window_index < len(windows) else None
        if win is not None and win.start <= frame < win.end:
            i = frame - win.start
            entries.append(
                EffectiveParams(
                    prompt_index_a=win.outgoing,
                    prompt_index_b=win.incoming,
                    blend_weight=(i + 1) / (win.length + 1),
                    temperature=win.temperature,
                    top_k=win.top_k,
                )
            )
        else:
            segment = bisect_right(boundaries, frame) - 1
            entries.append(
                EffectiveParams(
                    prompt_index_a=segment,
                    prompt_index_b=None,
                    blend_weight=0.0,
                    temperature=sp.base_temperature,
                    top_k=sp.base_top_k,
                )
            )

    return Schedule(
        total_frames=total_frames,
        frame_rate=float(frame_rate),
        entries=tuple(entries),
        windows=tuple(windows),
        segment_boundaries=tuple(boundaries),
        base_temperature=sp.base_temperature,
        base_top_k=sp.base_top_k,
    )


def params_at(schedule: Schedule, frame: int) -> EffectiveParams:
    """Parameters in force at ``frame``, by binary search over windows.

    Equivalent to ``schedule.entries[frame]`` but runs in
    O(log #windows) without touching the per-frame table.
    """
    if not (0 <= frame < schedule.total_frames):
        raise InputError(f"frame {frame} outside [0, {schedule.total_frames})")
    idx = bisect_right(schedule._window_starts, frame) - 1
    if idx >= 0:
        win = schedule.windows[idx]
        if frame < win.end:
            i = frame - win.start
            return EffectiveParams(
                prompt_index_a=win.outgoing,
                prompt_index_b=win.incoming,
                blend_weight=(i + 1) / (win.length + 1),
                temperature=win.temperature,
                top_k=win.top_k,
            )
    segment = bisect_right(schedule.segment_boundaries, frame) - 1
    return EffectiveParams(
        prompt_index_a=segment,
        prompt_index_b=None,
        blend_weight=0.0,
        temperature=schedule.base_temperature,
        top_k=schedule.base_top_k,
    )


# ---------------------------------------------------------------------------
# Score file format: UTF-8 JSON.
#
# {
#   "segments":    [{"prompt": str, "duration_seconds": num,
#                    "guidance_scale": num?}, ...],
#   "transitions": [{"duration_seconds": num?, "temperature_multiplier": num?,
#                    "top_k_multiplier": num?}, ...],   # optional
#   "sampling":    {"temperature": num?, "top_k": int?, "mode": str?,
#                   "beam_width": int?, "seed": int?}   # optional
# }
#
# Omitted transitions default-fill (one default TransitionSpec per
# boundary); a present "transitions" array must have exactly
# len(segments)-1 entries. Unknown keys are rejected in strict mode and
# reported as warnings otherwise. Duplicate keys are always rejected.
# ---------------------------------------------------------------------------

_SEGMENT_KEYS = {"prompt", "duration_seconds", "guidance_scale"}
_TRANSITION_KEYS = {"duration_seconds", "temperature_multiplier", "top_k_multiplier"}
_SAMPLING_KEYS = {"temperature", "top_k", "mode", "beam_width", "seed"}
_TOP_KEYS = {"segments", "transitions", "sampling"}


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    obj: dict[str, Any] = {}
    for key, value in pairs:
        if key in obj:
            raise ParseError(f"duplicate field {key!r}")
        obj[key] = value
    return obj


def _require_number(value: Any, location: str, *, positive: bool = False, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", location)
    if not math.isfinite(value):
        raise ParseError(f"expected a finite number, got {value!r}", location)
    if positive and not value > 0:
        raise ParseError(f"expected a positive number, got {value!r}", location)
    if minimum is not None and value < minimum:
        raise ParseError(f"expected a number >= {minimum:g}, got {value!r}", location)
    return float(value)


def _require_int(value: Any, location: str, *, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", location)
    if minimum is not None and value < minimum:
        raise ParseError(f"expected an integer >= {minimum}, got {value!r}", location)
    return value


def _check_keys(
    obj: dict[str, Any],
    allowed: set[str],
    location: str,
    strict: bool,
    warnings: list[Diagnostic] | None,
) -> None:
    unknown = [k for k in obj if k not in allowed]
    if not unknown:
        return
    if strict:
        raise ParseError(f"unknown field {unknown[0]!r}", location)
    if warnings is not None:
        for k in unknown:
            warnings.append(
                Diagnostic("warning", "unknown-field", f"ignoring unknown field {k!r}", location)
            )


def load_score(
    data: bytes | str,
    *,
    strict: bool = True,
    warnings: list[Diagnostic] | None = None,
) -> Score:
    """Parse a score document.

    Raises ParseError with a line or field location for malformed JSON,
    schema violations, duplicate fields, and (in strict mode) unknown
    fields. In non-strict mode unknown fields are skipped; pass a list as
    ``warnings`` to collect a Diagnostic for each one.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}") from None
    else:
        text = data
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except ParseError:
        raise
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None

    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")
    _check_keys(doc, _TOP_KEYS, "top level", strict, warnings)

    if "segments" not in doc:
        raise ParseError("missing required field 'segments'")
    raw_segments = doc["segments"]
    if not isinstance(raw_segments, list):
        raise ParseError("expected an array", "segments")

    segments: list[Segment] = []
    for i, raw in enumerate(raw_segments):
        loc = f"segments[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("expected an object", loc)
        _check_keys(raw, _SEGMENT_KEYS, loc, strict, warnings)
        if "prompt" not in raw:
            raise ParseError("missing required field 'prompt'", loc)
        if not isinstance(raw["prompt"], str):
            raise ParseError(f"expected a string, got {raw['prompt']!r}", f"{loc}.prompt")
        if not raw["prompt"].strip():
            raise ParseError("prompt text is empty", f"{loc}.prompt")
        if "duration_seconds" not in raw:
            raise ParseError("missing required field 'duration_seconds'", loc)
        duration = _require_number(raw["duration_seconds"], f"{loc}.duration_seconds", positive=True)
        guidance = None
        if "guidance_scale" in raw:
            guidance = _require_number(raw["guidance_scale"], f"{loc}.guidance_scale", positive=True)
        segments.append(Segment(Prompt(raw["prompt"], guidance), duration))

    transitions: list[TransitionSpec] = []
    if "transitions" in doc:
        raw_transitions = doc["transitions"]
        if not isinstance(raw_transitions, list):
            raise ParseError("expected an array", "transitions")
        if len(raw_transitions) != max(0, len(segments) - 1):
            raise ParseError(
                f"expected {max(0, len(segments) - 1)} transitions for "
                f"{len(segments)} segments, got {len(raw_transitions)}",
                "transitions",
            )
        for i, raw in enumerate(raw_transitions):
            loc = f"transitions[{i}]"
            if not isinstance(raw, dict):
                raise ParseError("expected an object", loc)
            _check_keys(raw, _TRANSITION_KEYS, loc, strict, warnings)
            spec = TransitionSpec()
            if "duration_seconds" in raw:
                spec = replace(
                    spec,
                    duration_seconds=_require_number(
                        raw["duration_seconds"], f"{loc}.duration_seconds", positive=True
                    ),
                )
            if "temperature_multiplier" in raw:
                spec = replace(
                    spec,
                    temperature_multiplier=_require_number(
                        raw["temperature_multiplier"], f"{loc}.temperature_multiplier", minimum=1.0
                    ),
                )
            if "top_k_multiplier" in raw:
                spec = replace(
                    spec,
                    top_k_multiplier=_require_number(
                        raw["top_k_multiplier"], f"{loc}.top_k_multiplier", minimum=1.0
                    ),
                )
            transitions.append(spec)
    else:
        transitions = [TransitionSpec() for _ in range(max(0, len(segments) - 1))]

    sampling = SamplingConfig()
    if "sampling" in doc:
        raw = doc["sampling"]
        if not isinstance(raw, dict):
            raise ParseError("expected an object", "sampling")
        _check_keys(raw, _SAMPLING_KEYS, "sampling", strict, warnings)
        if "temperature" in raw:
            sampling = replace(
                sampling,
                base_temperature=_require_number(raw["temperature"], "sampling.temperature", positive=True),
            )
        if "top_k" in raw:
            sampling = replace(sampling, base_top_k=_require_int(raw["top_k"], "sampling.top_k", minimum=1))
        if "mode" in raw:
            if raw["mode"] not in SAMPLING_MODES:
                raise ParseError(
                    f"mode must be one of {list(SAMPLING_MODES)}, got {raw['mode']!r}", "sampling.mode"
                )
            sampling = replace(sampling, mode=raw["mode"])
        if "beam_width" in raw:
            sampling = replace(
                sampling, beam_width=_require_int(raw["beam_width"], "sampling.beam_width", minimum=1)
            )
        if "seed" in raw:
            seed = _require_int(raw["seed"], "sampling.seed", minimum=0)
            if seed >= 2**64:
                raise ParseError(f"seed must fit in 64 unsigned bits, got {seed}", "sampling.seed")
            sampling = replace(sampling, seed=seed)

    return Score(segments=tuple(segments), transitions=tuple(transitions), sampling=sampling)


def save_score(score: Score) -> bytes:
    """Serialize a score to the documented JSON format.

    ``load_score(save_score(s))`` is the identity on valid scores.
    """
    doc: dict[str, Any] = {
        "segments": [
            {
                "prompt": seg.prompt.text,
                "duration_seconds": seg.duration_seconds,
                **(
                    {"guidance_scale": seg.prompt.guidance_scale}
                    if seg.prompt.guidance_scale is not None
                    else {}
                ),
            }
            for seg in score.segments
        ],
        "transitions": [
            {
                "duration_seconds": tr.duration_seconds,
                "temperature_multiplier": tr.temperature_multiplier,
                "top_k_multiplier": tr.top_k_multiplier,
            }
            for tr in score.transitions
        ],
        "sampling": {
            "temperature": score.sampling.base_temperature,
            "top_k": score.sampling.base_top_k,
            "mode": score.sampling.mode,
            "beam_width": score.sampling.beam_width,
            "seed": score.sampling.seed,
        },
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
