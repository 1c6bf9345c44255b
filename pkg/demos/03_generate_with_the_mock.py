"""A full generation pass against the in-process mock backend.

The mock biases a fixed token set per prompt, so you can watch the
sampled tokens migrate from one set to the other across the transition.

Run: python3 demos/03_generate_with_the_mock.py
"""

from segue import (
    MockBackend,
    MockModel,
    Prompt,
    SamplingConfig,
    Score,
    Segment,
    TransitionSpec,
    compile_score,
    generate,
)

score = Score(
    segments=(
        Segment(Prompt("alpha"), 6.0),
        Segment(Prompt("beta"), 6.0),
    ),
    transitions=(TransitionSpec(duration_seconds=4.0),),
    sampling=SamplingConfig(seed=42),
)

backend = MockBackend()
result = generate(score, backend)
schedule = compile_score(score, backend.handshake().frame_rate)

model = MockModel()
alpha_set = set(model.bias_set("alpha").tolist())
beta_set = set(model.bias_set("beta").tolist())
print(f"alpha-biased tokens: {sorted(alpha_set)}")
print(f"beta-biased tokens:  {sorted(beta_set)}\n")

print("share of sampled tokens landing in each bias set, per second:")
frame_rate = int(schedule.frame_rate)
for second in range(len(result.frames) // frame_rate):
    chunk = result.frames[second * frame_rate : (second + 1) * frame_rate]
    tokens = [f.channels[0] for f in chunk]
    in_alpha = sum(t in alpha_set for t in tokens) / len(tokens)
    in_beta = sum(t in beta_set for t in tokens) / len(tokens)
    w = schedule.entries[second * frame_rate].blend_weight
    print(f"  {second:2}s  alpha {in_alpha:4.0%}  beta {in_beta:4.0%}   (w at start: {w:.2f})")

stats = result.stats
print(f"\nbackend calls: {stats.logits_calls} logits, {stats.append_calls} appends")
print(f"window frames: {stats.window_frames} of {stats.frame_count}")
print(f"mean sampling entropy inside the window: {stats.window_mean_entropy[0]:.3f} nats")
