"""Driving a backend subprocess over the wire protocol.

Spawns the mock backend as a child process, runs a short generation
through the newline-delimited JSON protocol, and prints the first wire
exchanges verbatim. protocol.md documents every message.

Run: python3 demos/04_wire_protocol_session.py
"""

import sys

from segue import (
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    WireBackend,
    generate,
)

score = Score(
    segments=(
        Segment(Prompt("alpha"), 2.0),
        Segment(Prompt("beta"), 2.0),
    ),
    transitions=(TransitionSpec(duration_seconds=1.0),),
    sampling=SamplingConfig(seed=7),
)

transcript: list[str] = []
backend = WireBackend.from_command(
    [sys.executable, "-m", "segue.mockbackend"], transcript=transcript
)
try:
    info = backend.handshake()
    print(f"handshake: {info.name}, V={info.vocab_size}, C={info.channels}, "
          f"{info.frame_rate} frames/s\n")
    result = generate(score, backend)
finally:
    backend.close()

print(f"generated {len(result.frames)} frames over "
      f"{result.stats.logits_calls} logits queries\n")

print("first exchanges on the wire ('>' sent, '<' received):")
for line in transcript[:8]:
    shown = line if len(line) < 100 else line[:97] + "..."
    print(" ", shown)

print(f"\n({len(transcript)} lines total; rerunning this script reproduces "
      "them byte for byte)")
