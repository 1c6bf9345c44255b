"""Deterministic closed-form logit backend for desk-scale tests.

The mock model biases a fixed set of tokens per prompt and adds a small
history-dependent bigram term, so context-coherence bugs change its output
while the exact sampling distribution at any step stays computable in
closed form. It runs in-process (instantiate ``MockBackend`` directly,
bypassing serialization) or as a subprocess speaking the wire protocol:

    python -m segue.mockbackend [--vocab-size N] [--channels C] ...

Frozen fixture constants (do not retune casually; tests assert against
them): the prompt-hash key was chosen so the documented test prompts
"alpha" and "beta" get disjoint bias sets, and the in-bias logit was tuned
until the in-bias probability mass at temperature 1.0 exceeds 0.85 for
every possible history row, then frozen. Logits are computed in float32
and widened to float64 so both wire encodings round-trip them exactly.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import logging
import math
import sys
import wave
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .backend import (
    BackendInfo,
    ContextHandle,
    DecodeInfo,
    PROTOCOL_VERSION,
    major_version,
    serve_lines,
)
from .errors import (
    CapacityError,
    InputError,
    ProtocolError,
    UnsupportedOperationError,
)
from .score import Prompt
from .tokenio import TokenFrame

log = logging.getLogger(__name__)

# Fixture constants, frozen (see module docstring).
HASH_KEY = b"segue-mock-v4"
BIGRAM_SEED = 0x5E67E
IN_BIAS_LOGIT = 3.0
OUT_BIAS_LOGIT = -1.0
BIGRAM_WEIGHT = 0.5

DEFAULT_VOCAB_SIZE = 64
DEFAULT_CHANNELS = 1
DEFAULT_FRAME_RATE = 50.0
DEFAULT_BIAS_SIZE = 8
DEFAULT_MAX_CONTEXTS = 32
DEFAULT_MAX_CONTEXT_FRAMES = 100_000
DEFAULT_SAMPLE_RATE = 32_000

BASE_TONE_HZ = 110.0


def tone_frequency(token: int) -> float:
    """Frequency of the rendered tone for a token: 110 Hz times
    2**(token/12), i.e. one semitone per token step."""
    return BASE_TONE_HZ * 2.0 ** (token / 12.0)


class MockModel:
    """Closed-form logit function over (prompt text, last token).

    logit[t] = IN_BIAS_LOGIT if t is in the prompt's bias set else
    OUT_BIAS_LOGIT, plus BIGRAM_WEIGHT * bigram[last, t] where bigram is a
    fixed pseudo-random table and row ``vocab_size`` stands for "no
    history yet".
    """

    def __init__(
        self,
        vocab_size: int = DEFAULT_VOCAB_SIZE,
        channels: int = DEFAULT_CHANNELS,
        frame_rate: float = DEFAULT_FRAME_RATE,
        bias_size: int = DEFAULT_BIAS_SIZE,
    ):
        if vocab_size < 2:
            raise InputError(f"vocab_size must be >= 2, got {vocab_size}")
        if not 1 <= bias_size <= vocab_size:
            raise InputError(f"bias_size must be in [1, {vocab_size}], got {bias_size}")
        if channels < 1:
            raise InputError(f"channels must be >= 1, got {channels}")
        self.vocab_size = vocab_size
        self.channels = channels
        self.frame_rate = float(frame_rate)
        self.bias_size = bias_size
        rng = np.random.default_rng(BIGRAM_SEED)
        self._bigram = rng.random((vocab_size + 1, vocab_size), dtype=np.float32)
        self._base_cache: dict[str, np.ndarray] = {}

    def bias_set(self, prompt_text: str) -> np.ndarray:
        """Sorted token indices biased by this prompt, derived from a
        stable keyed 64-bit hash of the text."""
        digest = hashlib.blake2b(
            prompt_text.encode("utf-8"), digest_size=8, key=HASH_KEY
        ).digest()
        seed = int.from_bytes(digest, "little")
        picks = np.random.default_rng(seed).choice(
            self.vocab_size, size=self.bias_size, replace=False
        )
        return np.sort(picks)

    def _base(self, prompt_text: str) -> np.ndarray:
        cached = self._base_cache.get(prompt_text)
        if cached is None:
            cached = np.full(self.vocab_size, OUT_BIAS_LOGIT, dtype=np.float32)
            cached[self.bias_set(prompt_text)] = IN_BIAS_LOGIT
            self._base_cache[prompt_text] = cached
        return cached

    def logits_row(self, prompt_text: str, last_token: int | None) -> np.ndarray:
        """Logits for the next token given the prompt and the previous
        token on the same channel (None before the first frame)."""
        row = self.vocab_size if last_token is None else int(last_token)
        if not 0 <= row <= self.vocab_size:
            raise InputError(f"last token {last_token} outside [0, {self.vocab_size})")
        values32 = self._base(prompt_text) + np.float32(BIGRAM_WEIGHT) * self._bigram[row]
        return values32.astype(np.float64)


@dataclass
class _MockContext:
    handle: ContextHandle
    prompt: Prompt
    history: list[TokenFrame] = field(default_factory=list)


class MockBackend:
    """In-process backend over a MockModel, with call instrumentation.

    ``calls`` counts every operation served (logits counts once per
    context queried); ``contexts`` maps live context ids to their state
    for test inspection.
    """

    def __init__(
        self,
        model: MockModel | None = None,
        *,
        max_contexts: int = DEFAULT_MAX_CONTEXTS,
        max_context_frames: int = DEFAULT_MAX_CONTEXT_FRAMES,
        supports_decode: bool = True,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        name: str = "mock",
    ):
        self.model = model if model is not None else MockModel()
        self.max_contexts = max_contexts
        self.max_context_frames = max_context_frames
        self.supports_decode = supports_decode
        self.sample_rate = sample_rate
        self.name = name
        self.contexts: dict[int, _MockContext] = {}
        self.calls: dict[str, int] = {
            "handshake": 0,
            "new_context": 0,
            "append": 0,
            "logits": 0,
            "decode": 0,
            "free": 0,
        }
        self._next_context_id = 1
        self._info = BackendInfo(
            name=name,
            vocab_size=self.model.vocab_size,
            channels=self.model.channels,
            frame_rate=self.model.frame_rate,
            max_context_frames=max_context_frames,
            supports_decode=supports_decode,
        )

    # -- Backend protocol ---------------------------------------------------

    def handshake(self) -> BackendInfo:
        self.calls["handshake"] += 1
        return self._info

    def new_context(self, prompt: Prompt) -> ContextHandle:
        self.calls["new_context"] += 1
        if not prompt.text.strip():
            raise InputError("prompt text is empty")
        if len(self.contexts) >= self.max_contexts:
            raise CapacityError(f"context limit of {self.max_contexts} reached")
        handle = ContextHandle(id=self._next_context_id)
        self._next_context_id += 1
        self.contexts[handle.id] = _MockContext(handle=handle, prompt=prompt)
        return handle

    def _get(self, ctx: ContextHandle) -> _MockContext:
        state = self.contexts.get(ctx.id)
        if state is None:
            raise ProtocolError(f"unknown context id {ctx.id}")
        return state

    def append(self, ctx: ContextHandle, frames: Sequence[TokenFrame]) -> None:
        self.calls["append"] += 1
        state = self._get(ctx)
        if len(state.history) + len(frames) > self.max_context_frames:
            raise CapacityError(
                f"context {ctx.id} would exceed {self.max_context_frames} frames"
            )
        for frame in frames:
            self._check_frame(frame)
            state.history.append(frame)
        state.handle.position = len(state.history)
        ctx.position = len(state.history)

    def _check_frame(self, frame: TokenFrame) -> None:
        if len(frame.channels) != self.model.channels:
            raise InputError(
                f"frame has {len(frame.channels)} channels, backend has {self.model.channels}"
            )
        for token in frame.channels:
            if not 0 <= token < self.model.vocab_size:
                raise InputError(f"token {token} outside [0, {self.model.vocab_size})")

    def logits(self, ctx: ContextHandle) -> np.ndarray:
        self.calls["logits"] += 1
        state = self._get(ctx)
        rows = []
        for channel in range(self.model.channels):
            last = state.history[-1].channels[channel] if state.history else None
            rows.append(self.model.logits_row(state.prompt.text, last))
        return np.stack(rows)

    def logits_many(self, ctxs: Sequence[ContextHandle]) -> list[np.ndarray]:
        return [self.logits(ctx) for ctx in ctxs]

    def decode(self, frames: Sequence[TokenFrame], output_path: str) -> DecodeInfo:
        self.calls["decode"] += 1
        if not self.supports_decode:
            raise UnsupportedOperationError("this backend does not decode audio")
        if not frames:
            raise InputError("cannot decode an empty frame list")
        for frame in frames:
            self._check_frame(frame)
        write_tone_wav(
            frames,
            output_path,
            frame_rate=self.model.frame_rate,
            sample_rate=self.sample_rate,
        )
        return DecodeInfo(
            path=str(output_path),
            duration_seconds=len(frames) / self.model.frame_rate,
            sample_rate=self.sample_rate,
            frame_count=len(frames),
        )

    def free_context(self, ctx: ContextHandle) -> None:
        self.calls["free"] += 1
        if ctx.id not in self.contexts:
            raise ProtocolError(f"unknown context id {ctx.id}")
        del self.contexts[ctx.id]

    def close(self) -> None:
        self.contexts.clear()


def write_tone_wav(
    frames: Sequence[TokenFrame],
    path: str,
    *,
    frame_rate: float,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> None:
    """Render token frames as sine tones into a 16-bit mono RIFF/WAVE file.

    Each frame lasts 1/frame_rate seconds; multi-channel frames mix their
    channels' tones equally.
    """
    samples_per_frame = round(sample_rate / frame_rate)
    if samples_per_frame < 1:
        raise InputError(f"sample rate {sample_rate} too low for {frame_rate} frames/s")
    t = np.arange(samples_per_frame) / sample_rate
    chunks = []
    for frame in frames:
        mix = np.zeros(samples_per_frame)
        for token in frame.channels:
            mix += np.sin(2 * math.pi * tone_frequency(token) * t)
        mix /= max(1, len(frame.channels))
        chunks.append(mix)
    signal = np.concatenate(chunks)
    pcm = np.clip(signal * 0.4, -1.0, 1.0)
    data = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(data.tobytes())


# ---------------------------------------------------------------------------
# Wire server.
# ---------------------------------------------------------------------------


class _WireHandler:
    """Maps wire requests onto a MockBackend instance."""

    def __init__(self, backend: MockBackend):
        self.backend = backend

    def __call__(self, request: dict[str, Any]) -> dict[str, Any]:
        op = request.get("op")
        if not isinstance(op, str):
            raise ProtocolError("request lacks an op")
        method = getattr(self, f"_op_{op}", None)
        if method is None:
            raise UnsupportedOperationError(f"unknown op {op!r}")
        return method(request)

    @staticmethod
    def _field(request: dict[str, Any], name: str) -> Any:
        if name not in request:
            raise ProtocolError(f"missing required field {name!r}")
        return request[name]

    def _context(self, request: dict[str, Any]) -> ContextHandle:
        cid = self._field(request, "context")
        if not isinstance(cid, int) or isinstance(cid, bool):
            raise ProtocolError(f"context id must be an integer, got {cid!r}")
        return ContextHandle(id=cid)

    def _frames(self, request: dict[str, Any]) -> list[TokenFrame]:
        raw = self._field(request, "frames")
        if not isinstance(raw, list):
            raise ProtocolError("frames must be an array")
        frames = []
        for item in raw:
            if not isinstance(item, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in item
            ):
                raise ProtocolError(f"each frame must be an array of integers, got {item!r}")
            frames.append(TokenFrame(tuple(item)))
        return frames

    def _op_handshake(self, request: dict[str, Any]) -> dict[str, Any]:
        theirs = str(self._field(request, "protocol_version"))
        if major_version(theirs) != major_version(PROTOCOL_VERSION):
            raise ProtocolError(
                f"protocol major version mismatch: client speaks {theirs}, "
                f"backend speaks {PROTOCOL_VERSION}"
            )
        info = self.backend.handshake()
        return {
            "ok": True,
            "protocol_version": PROTOCOL_VERSION,
            "name": info.name,
            "vocab_size": info.vocab_size,
            "channels": info.channels,
            "frame_rate": info.frame_rate,
            "max_context_frames": info.max_context_frames,
            "supports_decode": info.supports_decode,
        }

    def _op_new_context(self, request: dict[str, Any]) -> dict[str, Any]:
        text = self._field(request, "prompt")
        if not isinstance(text, str):
            raise ProtocolError(f"prompt must be a string, got {text!r}")
        guidance = request.get("guidance_scale")
        if guidance is not None and (
            isinstance(guidance, bool) or not isinstance(guidance, (int, float)) or guidance <= 0
        ):
            raise ProtocolError(f"guidance_scale must be a positive number, got {guidance!r}")
        handle = self.backend.new_context(Prompt(text, guidance))
        return {"ok": True, "context": handle.id}

    def _op_append(self, request: dict[str, Any]) -> dict[str, Any]:
        ctx = self._context(request)
        self.backend.append(ctx, self._frames(request))
        return {"ok": True, "position": ctx.position}

    def _op_logits(self, request: dict[str, Any]) -> dict[str, Any]:
        encoding = request.get("encoding")
        if encoding not in (None, "b64f32"):
            raise ProtocolError(f"unknown logits encoding {encoding!r}")
        matrix = self.backend.logits(self._context(request))
        if encoding == "b64f32":
            rows = [
                base64.b64encode(row.astype("<f4").tobytes()).decode("ascii")
                for row in matrix
            ]
            return {"ok": True, "encoding": "b64f32", "logits": rows}
        return {"ok": True, "logits": [row.tolist() for row in matrix]}

    def _op_decode(self, request: dict[str, Any]) -> dict[str, Any]:
        path = self._field(request, "path")
        if not isinstance(path, str):
            raise ProtocolError(f"path must be a string, got {path!r}")
        info = self.backend.decode(self._frames(request), path)
        return {
            "ok": True,
            "path": info.path,
            "duration_seconds": info.duration_seconds,
            "sample_rate": info.sample_rate,
            "frame_count": info.frame_count,
        }

    def _op_free(self, request: dict[str, Any]) -> dict[str, Any]:
        self.backend.free_context(self._context(request))
        return {"ok": True}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="segue-mockbackend",
        description="Deterministic mock logit backend speaking the wire protocol on stdio.",
    )
    parser.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
    parser.add_argument("--channels", type=int, default=DEFAULT_CHANNELS)
    parser.add_argument("--frame-rate", type=float, default=DEFAULT_FRAME_RATE)
    parser.add_argument("--bias-size", type=int, default=DEFAULT_BIAS_SIZE)
    parser.add_argument("--max-contexts", type=int, default=DEFAULT_MAX_CONTEXTS)
    parser.add_argument("--max-context-frames", type=int, default=DEFAULT_MAX_CONTEXT_FRAMES)
    parser.add_argument("--sample-rate", type=int, default=DEFAULT_SAMPLE_RATE)
    parser.add_argument("--no-decode", action="store_true", help="advertise decode as unsupported")
    args = parser.parse_args(argv)

    model = MockModel(
        vocab_size=args.vocab_size,
        channels=args.channels,
        frame_rate=args.frame_rate,
        bias_size=args.bias_size,
    )
    backend = MockBackend(
        model,
        max_contexts=args.max_contexts,
        max_context_frames=args.max_context_frames,
        supports_decode=not args.no_decode,
        sample_rate=args.sample_rate,
    )
    serve_lines(_WireHandler(backend), sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
