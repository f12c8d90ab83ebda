"""
Rebasing rotary positions when the window slides
================================================

Shifting every cached token back in time by the same amount leaves all
pairwise attention logits unchanged, and the spatial grid stays put.
"""

# %%
import numpy as np

from packcache.cache import Position3D
from packcache.rope import RopeConfig, rebase, reindex_spatial, rotate

rng = np.random.default_rng(0)
cfg = RopeConfig()
pos = [Position3D(5, 1, 2), Position3D(7, 3, 0), Position3D(8, 0, 3)]
q = rng.standard_normal((3, 16))
k = rng.standard_normal((3, 16))

before = rotate(q, pos, cfg) @ rotate(k, pos, cfg).T
moved = rebase(pos, 5)
after = rotate(q, moved, cfg) @ rotate(k, moved, cfg).T
print([p.thw() for p in moved])
print(np.abs(before - after).max())

# %% packing everything into raster order instead moves tokens in space
packed = reindex_spatial(moved, frame_width=4)
print([p.thw() for p in packed])
shifted = rotate(q, packed, cfg) @ rotate(k, packed, cfg).T
print(np.abs(before - shifted).max())
