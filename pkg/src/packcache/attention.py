"""Dense masked attention over a frame-structured cache, with region statistics.

Weights are materialized so that per-region statistics and attention-mass
bookkeeping can be read off directly. Toy scale only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .cache import CacheEntry, FrameCache, KvCache, Region, RegionKind
from .rope import RopeConfig, rotate_heads

__all__ = [
    "AttentionResult",
    "RegionStats",
    "attend",
    "causal_visibility",
    "masked_attention",
    "accumulate_attention_mass",
    "region_stats",
    "write_region_stats_csv",
]


def causal_visibility(
    query_frames: np.ndarray, key_frames: np.ndarray, key_masked: np.ndarray | None = None
) -> np.ndarray:
    """Boolean ``(nq, nk)`` visibility.

    Frame index 0 marks an anchor key, visible to everyone. Otherwise a key is
    visible when its frame is not later than the query's frame (same frame is
    bidirectional) and it is not masked.
    """
    qf = np.asarray(query_frames)[:, None]
    kf = np.asarray(key_frames)[None, :]
    vis = (kf == 0) | (kf <= qf)
    if key_masked is not None:
        vis &= ~np.asarray(key_masked, dtype=bool)[None, :]
    return vis


def attend(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, visible: np.ndarray, *, heads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head softmax attention with hidden pairs at ``-inf``.

    Returns ``(output, weights)`` with shapes ``(nq, heads * d_v)`` and
    ``(heads, nq, nk)``.
    """
    nq, nk = q.shape[0], k.shape[0]
    if nk == 0:
        raise ValueError("attention over an empty key set")
    if q.shape[1] != k.shape[1] or q.shape[1] % heads or v.shape[1] % heads:
        raise ValueError(f"dimension mismatch q{q.shape} k{k.shape} v{v.shape} heads={heads}")
    if v.shape[0] != nk or visible.shape != (nq, nk):
        raise ValueError("key/value/mask shapes disagree")
    if not visible.any(axis=1).all():
        raise ValueError("some query has no visible key")
    dk = q.shape[1] // heads
    qh = q.reshape(nq, heads, dk).transpose(1, 0, 2)
    kh = k.reshape(nk, heads, dk).transpose(1, 0, 2)
    vh = v.reshape(nk, heads, -1).transpose(1, 0, 2)
    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(dk)
    logits = np.where(visible[None], logits, -np.inf)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    out = (w @ vh).transpose(1, 0, 2).reshape(nq, -1)
    return out, w


@dataclass
class AttentionResult:
    output: np.ndarray
    weights: np.ndarray
    layout: list[tuple[Region, slice]]
    keys: list[CacheEntry]
    visible: np.ndarray

    @property
    def attended_keys(self) -> int:
        """Distinct key columns visible to at least one query."""
        return int(self.visible.any(axis=0).sum())


def _layout(cache: KvCache, current: FrameCache) -> list[tuple[Region, slice]]:
    spans: list[tuple[Region, slice]] = []
    col = 0

    def add(region, n):
        nonlocal col
        if n:
            spans.append((region, slice(col, col + n)))
        col += n

    add(Region.text(), sum(e.region.kind is RegionKind.TEXT for e in cache.anchors))
    add(Region.cond(), sum(e.region.kind is RegionKind.COND for e in cache.anchors))
    for f in cache.frames:
        add(Region.history(f.frame_index), len(f))
    add(Region.current(current.frame_index), len(current))
    return spans


def masked_attention(
    queries: np.ndarray,
    cache: KvCache,
    current: FrameCache,
    cfg: RopeConfig = RopeConfig(),
    *,
    heads: int = 1,
) -> AttentionResult:
    """Current-frame queries against anchors, cached history and the current frame.

    ``queries`` row ``i`` sits at the position of ``current.entries[i]``.
    Masked entries stay in the key axis with zero weight.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.shape != (len(current), cache.d_k):
        raise ValueError(
            f"queries shape {queries.shape} != ({len(current)}, {cache.d_k})"
        )
    if cache.d_k != heads * cfg.head_dim:
        raise ValueError(f"d_k={cache.d_k} is not heads * head_dim")
    keys = list(cache.entries()) + list(current.entries)
    for e in current.entries:
        cache.check_entry(e)
    if not keys:
        raise ValueError("attention over an empty key set")

    k = np.stack([e.key for e in keys])
    v = np.stack([e.value for e in keys])
    k_pos = [e.pos for e in keys]
    one_d = None
    if cfg.text_rope == "1d":
        one_d = np.array([e.region.kind is RegionKind.TEXT for e in keys])
    k = rotate_heads(k, k_pos, cfg, heads=heads, one_d=one_d)
    q = rotate_heads(queries, [e.pos for e in current.entries], cfg, heads=heads)

    key_frames = np.array([0 if e.region.is_anchor else e.region.frame_index for e in keys])
    key_masked = np.array([e.masked for e in keys])
    visible = causal_visibility(
        np.full(len(current), current.frame_index), key_frames, key_masked
    )
    out, w = attend(q, k, v, visible, heads=heads)
    return AttentionResult(out, w, _layout(cache, current), keys, visible)


def accumulate_attention_mass(result: AttentionResult) -> None:
    """Add each key's column sum over queries, averaged over heads, to its mass."""
    mass = result.weights.sum(axis=1).mean(axis=0)
    for e, m in zip(result.keys, mass):
        e.attn_mass += float(m)


@dataclass
class RegionStats:
    means: dict[Region, float] = field(default_factory=dict)
    widths: dict[Region, int] = field(default_factory=dict)
    step: int = 0
    layer: int = 0
    frame_index: int = 0

    def history_by_distance(self, current_frame: int) -> dict[int, float]:
        return {
            current_frame - r.frame_index: m
            for r, m in self.means.items()
            if r.kind is RegionKind.HISTORY
        }

    def rows(self) -> list[tuple[int, int, str, float]]:
        return [(self.step, self.layer, r.label, m) for r, m in self.means.items()]


def region_stats(
    weights: np.ndarray,
    layout: Sequence[tuple[Region, slice]],
    *,
    step: int = 0,
    layer: int = 0,
    frame_index: int = 0,
) -> RegionStats:
    """Mean weight per region over query rows, key columns and heads.

    Rows are softmax-normalized, so ``sum(mean * width)`` over a partition of
    the key axis is one.
    """
    w = np.asarray(weights)
    if w.ndim == 3:
        w = w.mean(axis=0)
    nk = w.shape[1]
    covered = np.zeros(nk, dtype=int)
    for _, sl in layout:
        covered[sl] += 1
    if (covered > 1).any():
        raise ValueError("region column ranges overlap")
    if (covered == 0).any():
        raise ValueError("region column ranges do not cover the key axis")
    stats = RegionStats(step=step, layer=layer, frame_index=frame_index)
    for region, sl in layout:
        block = w[:, sl]
        stats.means[region] = float(block.mean())
        stats.widths[region] = block.shape[1]
    return stats


def write_region_stats_csv(
    stats: Iterable[RegionStats], fh: IO[str], *, with_frame: bool = False
) -> None:
    """CSV rows ``step, layer, region, mean``; ``with_frame`` prepends the frame."""
    writer = csv.writer(fh, lineterminator="\n")
    header = ["step", "layer", "region", "mean"]
    writer.writerow(["frame_index"] + header if with_frame else header)
    for s in stats:
        for step, layer, label, mean in s.rows():
            row = [step, layer, label, repr(mean)]
            writer.writerow([s.frame_index] + row if with_frame else row)
