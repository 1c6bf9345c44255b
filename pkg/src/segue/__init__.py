"""segue: long-form token generation by blending between prompt conditionings.

The package is organized around a small pipeline: a Score (prompts,
durations, transitions) compiles to a frame-exact Schedule; the engine
drives one or two backend contexts through it, blending their probability
distributions inside transition windows; backends speak a newline-
delimited JSON protocol (or run in-process, like the bundled mock).
"""

from .backend import (
    Backend,
    BackendInfo,
    ContextHandle,
    DecodeInfo,
    PROTOCOL_VERSION,
    WireBackend,
)
from .distmath import argmax, blend, entropy, kl_divergence, sample, softmax, top_k_filter
from .engine import (
    DecodeState,
    GenerationResult,
    GenerationStats,
    beam_generate,
    generate,
    open_incoming_context,
    step,
)
from .errors import (
    BackendError,
    BackendTimeoutError,
    CapacityError,
    CompileError,
    EngineError,
    HandshakeError,
    InputError,
    ParameterError,
    ParseError,
    PlanError,
    ProtocolError,
    SegueError,
    UnsupportedOperationError,
)
from .mockbackend import MockBackend, MockModel, tone_frequency, write_tone_wav
from .planner import PlanRequest, build_request, clamp_plan, plan
from .score import (
    Diagnostic,
    EffectiveParams,
    Prompt,
    SamplingConfig,
    Schedule,
    Score,
    Segment,
    TransitionSpec,
    Window,
    compile_score,
    has_errors,
    load_score,
    params_at,
    save_score,
    validate_score,
)
from .tokenio import TokenFrame, iter_jsonl, read_binary, write_binary, write_jsonl

__version__ = "0.1.0"
