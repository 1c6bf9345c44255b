"""Token frames and the two on-disk token stream formats.

JSONL mode writes one record per frame plus a trailing stats record.
Binary mode packs tokens as little-endian u32 behind a 16-byte header:
magic "SGTK", format version (u16), vocabulary size (u32), channel count
(u16), frame rate (f32). Both writers are deterministic: identical frames
and stats produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import IO, Any, Iterable, Iterator, Sequence

from .errors import InputError, ParseError
from .score import EffectiveParams

BINARY_MAGIC = b"SGTK"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sHIHf")
_TOKEN = struct.Struct("<I")


@dataclass(frozen=True)
class TokenFrame:
    """One generated time-step: one token per parallel codebook channel."""

    channels: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))


def write_jsonl(
    fp: IO[str],
    frames: Sequence[TokenFrame],
    params: Sequence[EffectiveParams],
    stats: dict[str, Any] | None = None,
) -> None:
    """Write frames as newline-delimited JSON records.

    Each record carries the frame index, its tokens, and the effective
    blend weight / temperature / top-K in force; a final record carries
    the stats object when given.
    """
    if len(frames) != len(params):
        raise InputError(f"{len(frames)} frames but {len(params)} parameter entries")
    for i, (frame, p) in enumerate(zip(frames, params)):
        record = {
            "frame": i,
            "tokens": list(frame.channels),
            "w": p.blend_weight,
            "temperature": p.temperature,
            "top_k": p.top_k,
        }
        fp.write(json.dumps(record) + "\n")
    if stats is not None:
        fp.write(json.dumps({"stats": stats}, sort_keys=True) + "\n")


def iter_jsonl(fp: IO[str]) -> Iterator[dict[str, Any]]:
    """Yield the parsed records of a JSONL token stream."""
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {lineno}") from None


def write_binary(
    fp: IO[bytes],
    frames: Iterable[TokenFrame],
    *,
    vocab_size: int,
    channels: int,
    frame_rate: float,
) -> None:
    fp.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, vocab_size, channels, frame_rate))
    for frame in frames:
        if len(frame.channels) != channels:
            raise InputError(
                f"frame has {len(frame.channels)} channels, header says {channels}"
            )
        for token in frame.channels:
            if not 0 <= token < vocab_size:
                raise InputError(f"token {token} outside [0, {vocab_size})")
            fp.write(_TOKEN.pack(token))


def read_binary(fp: IO[bytes]) -> tuple[dict[str, Any], list[TokenFrame]]:
    """Read a binary token stream; returns (header fields, frames)."""
    raw = fp.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ParseError(f"truncated header: got {len(raw)} bytes")
    magic, version, vocab_size, channels, frame_rate = _HEADER.unpack(raw)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {BINARY_MAGIC!r}")
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported format version {version}")
    header = {
        "version": version,
        "vocab_size": vocab_size,
        "channels": channels,
        "frame_rate": frame_rate,
    }
    body = fp.read()
    frame_bytes = channels * _TOKEN.size
    if len(body) % frame_bytes:
        raise ParseError(f"body of {len(body)} bytes is not a whole number of frames")
    frames = []
    for off in range(0, len(body), frame_bytes):
        channels_values = struct.unpack_from(f"<{channels}I", body, off)
        frames.append(TokenFrame(channels_values))
    return header, frames
