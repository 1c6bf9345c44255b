"""Pure numerical operations on token probability distributions.

Distributions are plain 1-D float64 numpy arrays that sum to 1 (within
``SUM_TOLERANCE``) with non-negative entries. Logit vectors are finite 1-D
float arrays. All functions are pure and allocate fresh output arrays; the
only stateful object in this module's API is the caller's random generator.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError, ParameterError

# Absolute tolerance on sum(probs) == 1 for a well-formed distribution.
SUM_TOLERANCE = 1e-6


def check_distribution(d: np.ndarray) -> np.ndarray:
    """Validate that ``d`` is a well-formed probability vector.

    Returns the array as float64. Raises InputError on NaN, negative
    entries, or a sum outside ``1 +- SUM_TOLERANCE``.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise InputError(f"distribution must be 1-D, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InputError("distribution contains non-finite entries")
    if np.any(d < 0):
        raise InputError("distribution contains negative entries")
    total = float(d.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise InputError(f"distribution sums to {total!r}, expected 1")
    return d


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Convert logits to probabilities at the given temperature.

    Computes exp(logits/T) / sum(exp(logits/T)) with the maximum subtracted
    after the temperature division, so large logits cannot overflow.
    """
    if not (isinstance(temperature, (int, float)) and math.isfinite(temperature)):
        raise ParameterError(f"temperature must be a finite number, got {temperature!r}")
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"logits must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("logits contain non-finite entries")
    z = x / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def blend(p: np.ndarray, q: np.ndarray, weight: float) -> np.ndarray:
    """Convex combination (1-weight)*p + weight*q of two distributions.

    ``weight`` is the share of the incoming distribution ``q``. The
    endpoints are exact: blend(p, q, 0) == p and blend(p, q, 1) == q
    bitwise, because IEEE multiply-by-0/1 and add-0 are exact on finite
    non-negative values.
    """
    if not (isinstance(weight, (int, float)) and 0.0 <= weight <= 1.0):
        raise ParameterError(f"blend weight must be in [0, 1], got {weight!r}")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InputError(f"length mismatch: {p.shape} vs {q.shape}")
    return (1.0 - weight) * p + weight * q


def top_k_filter(d: np.ndarray, k: int) -> np.ndarray:
    """Keep only the k most probable tokens and renormalize.

    Ties at the k-th rank are broken toward the lower token index. For
    k >= len(d) this is the identity (modulo a fresh copy).
    """
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ParameterError(f"k must be an integer, got {k!r}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    d = np.asarray(d, dtype=np.float64)
    if k >= d.shape[0]:
        return d.copy()
    # Stable sort on the negated values: descending by probability,
    # equal probabilities ordered by ascending token index.
    order = np.argsort(-d, kind="stable")
    survivors = order[:k]
    out = np.zeros_like(d)
    out[survivors] = d[survivors]
    total = out.sum()
    if total <= 0:
        raise InputError("top-k survivors carry no probability mass")
    out /= total
    return out


def sample(d: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one token index distributed according to ``d``.

    Consumes exactly one uniform draw from ``rng`` per call (inverse-CDF),
    so a fixed seed yields a fixed draw sequence regardless of vocabulary
    size. Zero-probability tokens are never returned.
    """
    d = np.asarray(d, dtype=np.float64)
    cdf = np.cumsum(d)
    total = cdf[-1]
    if not (total > 0 and np.isfinite(total)):
        raise InputError("cannot sample from a distribution with no mass")
    cdf /= total
    u = rng.random()
    return int(np.searchsorted(cdf, u, side="right"))


def argmax(d: np.ndarray) -> int:
    """Index of the most probable token; ties go to the lowest index."""
    d = np.asarray(d, dtype=np.float64)
    return int(np.argmax(d))


def entropy(d: np.ndarray) -> float:
    """Shannon entropy of ``d`` in nats, with 0*log(0) taken as 0."""
    d = np.asarray(d, dtype=np.float64)
    nz = d[d > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats. Infinite where p has mass and q does not."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InputError(f"length mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())
