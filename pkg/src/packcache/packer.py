"""Cache policies: full cache, sliding window, and PackCache.

PackCache moves through three regimes as frames complete:

fill
    fewer than ``W`` history frames; frames are appended with masked tokens
    dropped but no budget applied.
pack
    exactly ``W`` history frames; every frame is cut to its allocated share
    of the one-frame budget, keeping its highest-attention tokens.
slide
    a new frame pushes the oldest out; retained positions are rebased and
    the whole window is repacked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

from .allocation import QUOTA_MODES, AllocationPlan, plan_allocation
from .cache import FrameCache, KvCache
from .rope import REBASE_MODES, rebase, reindex_spatial

__all__ = [
    "POLICY_KINDS",
    "CachePolicy",
    "PackReport",
    "select_tokens",
    "reflow_budgets",
    "on_frame_complete",
    "write_pack_reports_csv",
]

POLICY_KINDS = ("full", "sliding", "packcache")
MASS_MODES = ("per_frame", "cumulative")


@dataclass(frozen=True)
class CachePolicy:
    kind: str = "packcache"
    window: int = 4
    plan_source: str = "closed_form"
    rho: float = 0.5
    quota_mode: str = "frame_equivalent"
    quota_frames: int = 3
    rope_rebase: str = "spatial_preserving"
    mass_mode: str = "per_frame"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.plan_source not in ("closed_form", "geometric"):
            raise ValueError(f"unknown plan source {self.plan_source!r}")
        if self.quota_mode not in QUOTA_MODES:
            raise ValueError(f"unknown quota mode {self.quota_mode!r}")
        if self.rope_rebase not in REBASE_MODES:
            raise ValueError(f"unknown rope_rebase mode {self.rope_rebase!r}")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(f"unknown mass mode {self.mass_mode!r}")

    @classmethod
    def full(cls, **kw) -> CachePolicy:
        return cls(kind="full", **kw)

    @classmethod
    def sliding(cls, window: int = 1, **kw) -> CachePolicy:
        return cls(kind="sliding", window=window, **kw)

    @classmethod
    def packcache(cls, window: int = 4, **kw) -> CachePolicy:
        return cls(kind="packcache", window=window, **kw)

    def plan(self, b_one: int, window: int | None = None) -> AllocationPlan:
        return plan_allocation(
            window or self.window,
            b_one,
            source=self.plan_source,
            rho=self.rho,
            quota_mode=self.quota_mode,
            quota_frames=self.quota_frames,
        )


@dataclass(frozen=True)
class PackReport:
    frame_index: int
    regime: str
    kept: tuple[int, ...]
    budgets: tuple[int, ...]
    removed_masked: int
    removed_by_budget: int
    evicted_frames: int
    occupancy: int


def select_tokens(frame: FrameCache, budget: int) -> list[int]:
    """Positions in ``frame.entries`` of the top-``budget`` unmasked entries.

    Ranked by ``attn_mass`` descending, ties to the lower intra-frame index;
    returned in ascending order so spatial order is kept.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    candidates = [i for i, e in enumerate(frame.entries) if not e.masked]
    candidates.sort(key=lambda i: (-frame.entries[i].attn_mass, frame.entries[i].index))
    return sorted(candidates[:budget])


def reflow_budgets(budgets: Iterable[int], supply: Iterable[int]) -> list[int]:
    """Clip budgets to supply and hand the shortfall to the nearest frames first."""
    budgets, supply = list(budgets), list(supply)
    kept = [min(b, s) for b, s in zip(budgets, supply)]
    surplus = sum(budgets) - sum(kept)
    for d, s in enumerate(supply):
        if surplus <= 0:
            break
        extra = min(surplus, s - kept[d])
        kept[d] += extra
        surplus -= extra
    return kept


def _drop_masked(frame: FrameCache) -> int:
    before = len(frame.entries)
    frame.entries = [e for e in frame.entries if not e.masked]
    return before - len(frame.entries)


def _evict(cache: KvCache, capacity: int) -> tuple[int, int]:
    evicted = tokens = 0
    while cache.depth > capacity:
        tokens += len(cache.frames.popleft())
        evicted += 1
    cache.dropped_frames += evicted
    return evicted, tokens


def _rebase_history(cache: KvCache, delta: int, mode: str) -> None:
    if mode == "none" or delta == 0:
        return
    for f in cache.frames:
        for e, p in zip(f.entries, rebase([e.pos for e in f.entries], delta)):
            e.pos = p


def _renumber(cache: KvCache, mode: str) -> None:
    """Make ``seq`` a contiguous rank over surviving tokens; anchors first."""
    if mode == "none":
        return
    for f in cache.frames:
        if mode == "fully_continuous":
            for e, p in zip(f.entries, reindex_spatial([e.pos for e in f.entries], cache.frame_width)):
                e.pos = p
    entries = list(cache.entries())
    for e, p in zip(entries, rebase([e.pos for e in entries], 0, seq_start=0)):
        e.pos = p


def _pack(cache: KvCache, plan: AllocationPlan) -> tuple[tuple[int, ...], int]:
    newest_first = list(reversed(cache.frames))
    supply = [len(f.unmasked) for f in newest_first]
    kept = reflow_budgets(plan.token_budgets, supply)
    for f, k in zip(newest_first, kept):
        keep = select_tokens(f, k)
        f.entries = [f.entries[i] for i in keep]
    return tuple(kept), sum(supply) - sum(kept)


def on_frame_complete(
    cache: KvCache, frame: FrameCache, policy: CachePolicy
) -> tuple[KvCache, PackReport]:
    """Hand a finished frame (mask flags set, nothing removed) to the policy.

    Mutates and returns ``cache``.
    """
    b_one = cache.frame_token_count
    if frame.original_token_count != b_one or len(frame.entries) != b_one:
        raise ValueError(
            f"frame {frame.frame_index} has {len(frame.entries)} tokens, expected {b_one}"
        )
    if frame.frame_index <= cache.last_seen_frame:
        raise ValueError(
            f"frame {frame.frame_index} arrived after frame {cache.last_seen_frame}"
        )

    if policy.kind == "full":
        cache.append_frame(frame)
        return cache, PackReport(
            frame.frame_index, "full", tuple(len(f) for f in reversed(cache.frames)),
            (), 0, 0, 0, cache.occupancy,
        )

    removed_masked = _drop_masked(frame)
    cache.append_frame(frame)

    if policy.kind == "sliding":
        evicted, evicted_tokens = _evict(cache, cache.window_capacity)
        _rebase_history(cache, evicted, policy.rope_rebase)
        _renumber(cache, policy.rope_rebase)
        return cache, PackReport(
            frame.frame_index, "sliding", tuple(len(f) for f in reversed(cache.frames)),
            (), removed_masked, evicted_tokens, evicted, cache.occupancy,
        )

    plan = policy.plan(b_one, cache.window_capacity)
    capacity = plan.effective_window
    evicted, evicted_tokens = _evict(cache, capacity)
    _rebase_history(cache, evicted, policy.rope_rebase)
    budgets: tuple[int, ...] = ()
    dropped = evicted_tokens
    if cache.depth == capacity:
        regime = "slide" if evicted else "pack"
        budgets = plan.token_budgets[:capacity]
        kept, by_budget = _pack(cache, plan)
        dropped += by_budget
    else:
        regime = "fill"
        kept = tuple(len(f) for f in reversed(cache.frames))
    _renumber(cache, policy.rope_rebase)
    return cache, PackReport(
        frame.frame_index, regime, kept, budgets, removed_masked, dropped, evicted,
        cache.occupancy,
    )


def write_pack_reports_csv(reports: Iterable[PackReport], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["frame_index", "regime", "kept_per_frame", "removed_masked", "removed_by_budget", "occupancy"]
    )
    for r in reports:
        writer.writerow(
            [r.frame_index, r.regime, " ".join(map(str, r.kept)), r.removed_masked,
             r.removed_by_budget, r.occupancy]
        )
