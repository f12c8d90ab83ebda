"""Frame-structured KV cache with semantic regions.

The cache holds two kinds of state:

* anchors: text-prompt and conditioning-image tokens, kept verbatim forever;
* history: a deque of :class:`FrameCache` objects, oldest first, whose
  combined size is what the policies in :mod:`packcache.packer` bound.
"""

from __future__ import annotations

import copy
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "RegionKind",
    "Region",
    "Position3D",
    "CacheEntry",
    "FrameCache",
    "KvCache",
    "CacheInvariantError",
    "new_cache",
    "set_anchors",
    "dump_snapshot",
    "parse_snapshot",
]


class CacheInvariantError(RuntimeError):
    """A cache invariant failed; ``invariant`` names which one."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"invariant violated: {invariant}" + (f" ({detail})" if detail else ""))


class RegionKind(enum.Enum):
    TEXT = "text"
    COND = "cond"
    HISTORY = "frame"
    CURRENT = "current"


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    frame_index: int = 0

    def __post_init__(self):
        if self.kind is RegionKind.HISTORY and self.frame_index < 1:
            raise ValueError("history frames are numbered from 1")

    @classmethod
    def text(cls) -> Region:
        return cls(RegionKind.TEXT)

    @classmethod
    def cond(cls) -> Region:
        return cls(RegionKind.COND)

    @classmethod
    def history(cls, frame_index: int) -> Region:
        return cls(RegionKind.HISTORY, frame_index)

    @classmethod
    def current(cls, frame_index: int = 0) -> Region:
        return cls(RegionKind.CURRENT, frame_index)

    @property
    def is_anchor(self) -> bool:
        return self.kind in (RegionKind.TEXT, RegionKind.COND)

    @property
    def label(self) -> str:
        if self.kind is RegionKind.HISTORY:
            return f"frame{self.frame_index}"
        return self.kind.value


@dataclass(frozen=True)
class Position3D:
    """Latent-grid coordinates ``(t, h, w)`` plus a 1D global sequence index."""

    t: int
    h: int
    w: int
    seq: int = 0

    def __post_init__(self):
        if min(self.t, self.h, self.w, self.seq) < 0:
            raise ValueError(f"negative position component in {self}")

    def thw(self) -> tuple[int, int, int]:
        return (self.t, self.h, self.w)


@dataclass(eq=False)
class CacheEntry:
    key: np.ndarray
    value: np.ndarray
    pos: Position3D
    region: Region
    index: int = 0
    masked: bool = False
    attn_mass: float = 0.0

    def same_contents(self, other: CacheEntry) -> bool:
        return (
            self.region == other.region
            and self.index == other.index
            and self.pos == other.pos
            and self.masked == other.masked
            and self.attn_mass == other.attn_mass
            and np.array_equal(self.key, other.key)
            and np.array_equal(self.value, other.value)
        )


@dataclass(eq=False)
class FrameCache:
    frame_index: int
    entries: list[CacheEntry]
    original_token_count: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def unmasked(self) -> list[CacheEntry]:
        return [e for e in self.entries if not e.masked]

    @property
    def masked_count(self) -> int:
        return sum(e.masked for e in self.entries)


@dataclass(eq=False)
class KvCache:
    window_capacity: int
    frame_token_count: int
    d_k: int
    d_v: int
    frame_width: int
    anchors: list[CacheEntry] = field(default_factory=list)
    frames: deque[FrameCache] = field(default_factory=deque)
    dropped_frames: int = 0
    anchors_set: bool = False
    last_seen_frame: int = 0

    @property
    def depth(self) -> int:
        return len(self.frames)

    @property
    def history_tokens(self) -> int:
        return sum(len(f) for f in self.frames)

    @property
    def occupancy(self) -> int:
        """Stored tokens, anchors included; masked rows count."""
        return len(self.anchors) + self.history_tokens

    def entries(self) -> Iterator[CacheEntry]:
        yield from self.anchors
        for f in self.frames:
            yield from f.entries

    def snapshot(self) -> KvCache:
        return copy.deepcopy(self)

    def reset_attention_mass(self) -> None:
        for e in self.entries():
            e.attn_mass = 0.0

    def check_entry(self, e: CacheEntry) -> None:
        if e.key.shape != (self.d_k,) or e.value.shape != (self.d_v,):
            raise ValueError(
                f"entry shapes {e.key.shape}/{e.value.shape} do not match "
                f"d_k={self.d_k}, d_v={self.d_v}"
            )

    def append_frame(self, frame: FrameCache) -> None:
        for e in frame.entries:
            self.check_entry(e)
            if e.region != Region.history(frame.frame_index):
                raise ValueError(f"entry region {e.region} in frame {frame.frame_index}")
        self.frames.append(frame)
        self.last_seen_frame = frame.frame_index

    def same_contents(self, other: KvCache) -> bool:
        a, b = list(self.entries()), list(other.entries())
        return (
            self.dropped_frames == other.dropped_frames
            and [f.frame_index for f in self.frames] == [f.frame_index for f in other.frames]
            and len(a) == len(b)
            and all(x.same_contents(y) for x, y in zip(a, b))
        )

    def check_invariants(self, *, packed: bool = False) -> None:
        if self.depth > self.window_capacity:
            raise CacheInvariantError(
                "window capacity", f"{self.depth} frames > W={self.window_capacity}"
            )
        if packed:
            if self.history_tokens > self.frame_token_count:
                raise CacheInvariantError(
                    "history budget",
                    f"{self.history_tokens} tokens > B_one={self.frame_token_count}",
                )
            if any(e.masked for f in self.frames for e in f.entries):
                raise CacheInvariantError("no masked entries after pack")
        for f in self.frames:
            if len(f) > f.original_token_count:
                raise CacheInvariantError("frame size", f"frame {f.frame_index}")
            if len({e.pos.t for e in f.entries}) > 1:
                raise CacheInvariantError("frame temporal index", f"frame {f.frame_index}")


def new_cache(
    w: int, b_one: int, d_k: int, d_v: int, *, frame_width: int | None = None
) -> KvCache:
    if min(w, b_one, d_k, d_v) < 1:
        raise ValueError(
            f"cache dimensions must be positive (w={w}, b_one={b_one}, d_k={d_k}, d_v={d_v})"
        )
    if frame_width is None:
        frame_width = math.isqrt(b_one - 1) + 1
    return KvCache(
        window_capacity=w,
        frame_token_count=b_one,
        d_k=d_k,
        d_v=d_v,
        frame_width=frame_width,
    )


def set_anchors(
    cache: KvCache,
    prompt_entries: Iterable[CacheEntry],
    cond_entries: Iterable[CacheEntry],
) -> KvCache:
    """Install the text-prompt and conditioning-image anchors, once."""
    if cache.anchors_set:
        raise ValueError("anchors already set on this cache")
    prompt_entries, cond_entries = list(prompt_entries), list(cond_entries)
    for e in prompt_entries:
        if e.region.kind is not RegionKind.TEXT:
            raise ValueError(f"prompt entry has region {e.region.label}")
    for e in cond_entries:
        if e.region.kind is not RegionKind.COND:
            raise ValueError(f"conditioning entry has region {e.region.label}")
    for e in prompt_entries + cond_entries:
        cache.check_entry(e)
    cache.anchors = prompt_entries + cond_entries
    cache.anchors_set = True
    return cache


def dump_snapshot(cache: KvCache) -> str:
    """One line per entry: region, frame, seq, t, h, w, masked, attn_mass."""
    lines = []
    for e in cache.entries():
        p = e.pos
        lines.append(
            f"{e.region.kind.value} {e.region.frame_index} {p.seq} {p.t} {p.h} {p.w} "
            f"{int(e.masked)} {e.attn_mass!r}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_snapshot(text: str) -> list[tuple]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        kind, frame, seq, t, h, w, masked, mass = line.split()
        rows.append(
            (
                Region(RegionKind(kind), int(frame)),
                Position3D(int(t), int(h), int(w), int(seq)),
                bool(int(masked)),
                float(mass),
            )
        )
    return rows
