"""Distribution primitives: softmax, temperature, blending, top-K.

Run: python3 demos/01_blending_basics.py
"""

import numpy as np

from segue import blend, sample, softmax, top_k_filter

rng = np.random.default_rng(0)

# Two small logit vectors standing in for two prompt conditionings.
logits_a = np.array([2.0, 1.0, 0.0, -1.0])
logits_b = np.array([-1.0, 0.0, 1.0, 2.0])

print("softmax at different temperatures (same logits):")
for temperature in (0.5, 1.0, 2.0, 10.0):
    print(f"  T={temperature:4}:", np.round(softmax(logits_a, temperature), 3))
print("hotter sampling flattens the distribution toward uniform.\n")

p = softmax(logits_a, 1.0)
q = softmax(logits_b, 1.0)
print("p (outgoing prompt):", np.round(p, 3))
print("q (incoming prompt):", np.round(q, 3))

print("\nsweeping the blend weight from p to q:")
for w in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"  w={w:4}:", np.round(blend(p, q, w), 3))
print("every intermediate distribution is a proper convex mixture.\n")

mixed = blend(p, q, 0.5)
print("top-2 filter on the 50/50 mixture:", np.round(top_k_filter(mixed, 2), 3))
print("the two strongest tokens keep their relative proportions.\n")

print("sampling is reproducible for a fixed seed:")
for seed in (7, 7, 8):
    rng = np.random.default_rng(seed)
    draws = [sample(mixed, rng) for _ in range(10)]
    print(f"  seed {seed}: {draws}")
