"""Rendering generated frames to audio with the mock decoder.

The mock maps token t to a sine at 110 * 2**(t/12) Hz (one semitone per
step), so a rendered transition is audible: the pitch set shifts from
one prompt's tokens to the other's across the window.

Run: python3 demos/07_render_tones.py [out.wav]
"""

import sys
import wave

from segue import (
    MockBackend,
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    generate,
    tone_frequency,
)

out_path = sys.argv[1] if len(sys.argv) > 1 else "mock_render.wav"

score = Score(
    segments=(
        Segment(Prompt("alpha"), 5.0),
        Segment(Prompt("beta"), 5.0),
    ),
    transitions=(TransitionSpec(duration_seconds=3.0),),
    sampling=SamplingConfig(seed=11),
)

backend = MockBackend()
result = generate(score, backend)
info = backend.decode(result.frames, out_path)

print(f"wrote {info.path}: {info.duration_seconds:g} s at {info.sample_rate} Hz")
with wave.open(out_path, "rb") as wav:
    print(f"({wav.getnframes()} samples, {wav.getnchannels()} channel, "
          f"{8 * wav.getsampwidth()}-bit)")

first = [f.channels[0] for f in result.frames[:5]]
print("\nfirst five frames:")
for token in first:
    print(f"  token {token:2} -> {tone_frequency(token):7.1f} Hz")
print("\nplay the file to hear the pitch palette slide between prompts.")
