"""From a score to a frame-exact parameter schedule.

Run: python3 demos/02_compile_a_schedule.py
"""

from segue import (
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    compile_score,
    params_at,
)

score = Score(
    segments=(
        Segment(Prompt("solo piano, quiet and sparse"), 10.0),
        Segment(Prompt("full orchestra, triumphant"), 10.0),
    ),
    transitions=(TransitionSpec(duration_seconds=4.0),),
    sampling=SamplingConfig(base_temperature=1.0, base_top_k=250),
)

schedule = compile_score(score, frame_rate=50.0)
print(f"total frames: {schedule.total_frames} at {schedule.frame_rate} frames/s")
window = schedule.windows[0]
print(
    f"transition window: frames [{window.start}, {window.end}) "
    f"({window.length} frames), centered on the segment boundary at "
    f"{schedule.segment_boundaries[1]}"
)

print("\nparameters around the window edges:")
for frame in (window.start - 1, window.start, window.start + window.length // 2,
              window.end - 1, window.end):
    p = params_at(schedule, frame)
    partner = "-" if p.prompt_index_b is None else p.prompt_index_b
    print(
        f"  frame {frame:4}: prompts ({p.prompt_index_a},{partner}) "
        f"w={p.blend_weight:.4f} T={p.temperature} K={p.top_k}"
    )
print("\ninside the window the temperature is boosted 1.5x and top-K doubled;")
print("outside it, base values apply and only one prompt is active.")

# A coarse picture of the weight ramp (one row per 20 frames).
print("\nblend weight across the window:")
for frame in range(window.start, window.end, 20):
    w = params_at(schedule, frame).blend_weight
    print(f"  frame {frame:4} " + "#" * int(w * 40) + f" {w:.3f}")
