from pathlib import Path

import numpy as np
import pytest

from conftest import make_anchors, make_frame
from packcache.cache import (
    CacheEntry,
    CacheInvariantError,
    FrameCache,
    Position3D,
    Region,
    RegionKind,
    dump_snapshot,
    new_cache,
    parse_snapshot,
    set_anchors,
)
from packcache.packer import CachePolicy, on_frame_complete

GOLDEN = Path(__file__).parent / "golden"


def test_new_cache_examples():
    c = new_cache(4, 16, 8, 8)
    assert c.depth == 0 and c.dropped_frames == 0 and c.anchors == []
    assert new_cache(1, 16, 8, 8).window_capacity == 1
    for args in [(0, 16, 8, 8), (4, 0, 8, 8), (4, 16, 0, 8), (4, 16, 8, -1)]:
        with pytest.raises(ValueError):
            new_cache(*args)


def test_default_frame_width_covers_frame():
    for b_one in (1, 16, 17, 4084):
        c = new_cache(2, b_one, 2, 2)
        assert c.frame_width ** 2 >= b_one


def test_set_anchors_at_deployment_scale():
    cache = new_cache(4, 4084, 2, 2)
    prompt, cond = make_anchors(249, 4084, d=2)
    set_anchors(cache, prompt, cond)
    assert len(cache.anchors) == 4333
    assert cache.history_tokens == 0
    assert cache.occupancy == 4333


def test_set_anchors_empty_and_errors():
    cache = set_anchors(new_cache(2, 4, 4, 4), [], [])
    assert cache.anchors == [] and cache.anchors_set
    with pytest.raises(ValueError, match="already"):
        set_anchors(cache, [], [])
    prompt, cond = make_anchors(2, 2)
    with pytest.raises(ValueError):
        set_anchors(new_cache(2, 4, 4, 4), cond, prompt)
    with pytest.raises(ValueError):
        set_anchors(new_cache(2, 4, 8, 8), prompt, cond)


def test_region_and_position_validation():
    with pytest.raises(ValueError):
        Region.history(0)
    with pytest.raises(ValueError):
        Position3D(-1, 0, 0)
    assert Region.text().is_anchor and Region.cond().is_anchor
    assert not Region.history(2).is_anchor
    assert Region.history(3).label == "frame3"


def test_append_rejects_wrong_shapes_and_regions(anchored_cache):
    cache = anchored_cache(d=4)
    with pytest.raises(ValueError):
        cache.append_frame(make_frame(1, 16, d=3))
    f = make_frame(1, 16)
    f.entries[0].region = Region.history(2)
    with pytest.raises(ValueError):
        cache.append_frame(f)


def test_invariant_checks_name_the_violation(anchored_cache):
    cache = anchored_cache(w=1, n=4)
    cache.frames.extend([make_frame(1, 4), make_frame(2, 4)])
    with pytest.raises(CacheInvariantError, match="window capacity"):
        cache.check_invariants()
    cache = anchored_cache(w=2, n=4)
    cache.frames.extend([make_frame(1, 4), make_frame(2, 4)])
    cache.check_invariants()
    with pytest.raises(CacheInvariantError, match="history budget"):
        cache.check_invariants(packed=True)
    cache = anchored_cache(w=2, n=4)
    cache.frames.append(make_frame(1, 4, masked={1}))
    with pytest.raises(CacheInvariantError, match="no masked entries"):
        cache.check_invariants(packed=True)
    bad = make_frame(1, 4)
    bad.entries[2].pos = Position3D(7, 0, 0)
    cache = anchored_cache(w=2, n=4)
    cache.frames.append(bad)
    with pytest.raises(CacheInvariantError, match="temporal index"):
        cache.check_invariants()


def test_snapshot_is_independent_copy(anchored_cache):
    cache = anchored_cache()
    cache.append_frame(make_frame(1, 16))
    snap = cache.snapshot()
    cache.frames[0].entries[0].attn_mass = 9.0
    cache.frames[0].entries[0].key[:] = 0
    assert snap.frames[0].entries[0].attn_mass == 0.0
    assert not snap.same_contents(cache)


def test_snapshot_text_round_trip(anchored_cache):
    cache = anchored_cache()
    cache.append_frame(make_frame(1, 16, masked={3}, mass=np.linspace(0, 1, 16)))
    rows = parse_snapshot(dump_snapshot(cache))
    assert len(rows) == cache.occupancy
    for (region, pos, masked, mass), e in zip(rows, cache.entries()):
        assert region == e.region
        assert pos == e.pos
        assert masked == e.masked
        assert mass == e.attn_mass


def _golden_cache():
    # W=3, N=16: three frames, hand-set masses, frame 2 partially masked
    cache = new_cache(3, 16, 4, 4, frame_width=4)
    set_anchors(cache, *make_anchors(2, 4))
    policy = CachePolicy.packcache(window=3, quota_mode="none")
    for f in (1, 2, 3):
        mass = [((7 * i + 3 * f) % 16) / 16 for i in range(16)]
        masked = {0, 5, 6, 7, 8, 9, 10, 11, 12, 13} if f == 2 else set()
        on_frame_complete(cache, make_frame(f, 16, masked=masked, mass=mass), policy)
    return cache


def test_golden_snapshot():
    text = dump_snapshot(_golden_cache())
    assert text == (GOLDEN / "packcache_w3_n16.txt").read_text()


def test_golden_plan_matches_pack():
    cache = _golden_cache()
    # newest first; frame 2 has 6 unmasked tokens, enough for its budget of 4
    assert [len(f) for f in reversed(cache.frames)] == [8, 4, 4]
    # top-k by mass worked out by hand from (7i + 3f) mod 16
    kept = {f.frame_index: [e.index for e in f.entries] for f in cache.frames}
    assert kept == {1: [4, 6, 13, 15], 2: [1, 3, 14, 15], 3: [0, 3, 5, 7, 9, 10, 12, 14]}
    kinds = [e.region.kind for e in cache.entries()]
    assert kinds[:6] == [RegionKind.TEXT] * 2 + [RegionKind.COND] * 4
    assert [e.pos.seq for e in cache.entries()] == list(range(cache.occupancy))


def test_frame_cache_helpers():
    f = make_frame(2, 5, masked={0, 4})
    assert f.masked_count == 2
    assert [e.index for e in f.unmasked] == [1, 2, 3]
    e = CacheEntry(np.zeros(4), np.zeros(4), Position3D(0, 0, 0), Region.text())
    assert e.attn_mass == 0.0 and not e.masked
    assert len(FrameCache(1, [], 4)) == 0
