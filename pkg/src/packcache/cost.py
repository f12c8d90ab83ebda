"""Closed-form attended-key counts per policy.

Counts are exact rationals. A Bernoulli keep probability ``p`` enters as
the expected unmasked count ``p * N`` per frame; with ``p = 1`` every count
is an integer and matches what :func:`packcache.simulator.run` measures.

The mapping to wall-clock speedup assumes attention dominates decoder time,
so a ratio of attended keys is a proxy (and, with fixed per-layer overhead
diluting the gain, an upper bound on measured speedup).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .packer import POLICY_KINDS

__all__ = [
    "CostTable",
    "attended_keys",
    "cost_model",
    "speedup",
    "latent_frames",
]


def latent_frames(video_frames: int) -> int:
    """Latent frames for a clip at 4x temporal compression (24 -> 7, 48 -> 13)."""
    if video_frames < 1:
        raise ValueError("video_frames must be positive")
    return video_frames // 4 + 1


def attended_keys(
    policy: str, t: int, n: int, w: int = 4, anchors: int = 0, keep_prob: Fraction | float = 1
) -> Fraction:
    """Keys visible to the queries of frame ``t`` (1-based)."""
    if policy not in POLICY_KINDS:
        raise ValueError(f"unknown policy {policy!r}")
    if min(t, n, w) < 1 or anchors < 0:
        raise ValueError("t, n, w must be positive and anchors non-negative")
    p = Fraction(keep_prob)
    if not 0 < p <= 1:
        raise ValueError("keep_prob must lie in (0, 1]")
    unmasked = p * n
    past = t - 1
    if policy == "full":
        history = past * unmasked
    elif policy == "sliding":
        history = min(past, w) * unmasked
    elif past < w:
        history = past * unmasked
    else:
        history = min(Fraction(n), w * unmasked)
    return anchors + history + n


@dataclass(frozen=True)
class CostTable:
    policy: str
    per_frame: tuple[Fraction, ...]
    cumulative: tuple[Fraction, ...]

    @property
    def total(self) -> Fraction:
        return self.cumulative[-1]

    def last(self, k: int = 1) -> Fraction:
        return sum(self.per_frame[-k:], Fraction(0))

    def rows(self):
        return [(t, pf, cum) for t, (pf, cum) in enumerate(zip(self.per_frame, self.cumulative), 1)]


def cost_model(
    policy: str, frames: int, n: int, w: int = 4, anchors: int = 0, keep_prob: Fraction | float = 1
) -> CostTable:
    if frames < 1:
        raise ValueError("frames must be positive")
    per = [attended_keys(policy, t, n, w, anchors, keep_prob) for t in range(1, frames + 1)]
    cum, acc = [], Fraction(0)
    for x in per:
        acc += x
        cum.append(acc)
    return CostTable(policy, tuple(per), tuple(cum))


def speedup(
    frames: int,
    n: int,
    w: int = 4,
    anchors: int = 0,
    keep_prob: Fraction | float = 1,
    *,
    baseline: str = "full",
    policy: str = "packcache",
    last: int | None = None,
) -> Fraction:
    """Baseline-to-policy ratio of attended keys, whole clip or last ``last`` frames."""
    a = cost_model(baseline, frames, n, w, anchors, keep_prob)
    b = cost_model(policy, frames, n, w, anchors, keep_prob)
    if last is None:
        return a.total / b.total
    return a.last(last) / b.last(last)
