"""
Attended keys as a speed proxy
==============================

When attention dominates decoder time, the ratio of attended keys bounds
the achievable speedup. 48 video frames are 13 latent frames.
"""

# %%
from packcache.cost import cost_model, latent_frames, speedup

N, ANCHORS = 4084, 249 + 4084  # frame tokens; prompt plus conditioning image
for video in (24, 48, 96):
    t = latent_frames(video)
    total = float(speedup(t, N, 4, ANCHORS))
    last = float(speedup(t, N, 4, ANCHORS, last=1))
    print(f"{video:3d} video frames ({t:2d} latent): total x{total:.2f}, last frame x{last:.2f}")

# %% per-frame counts for the 48-frame clip
full = cost_model("full", 13, N, 4, ANCHORS)
pack = cost_model("packcache", 13, N, 4, ANCHORS)
for t, (a, b) in enumerate(zip(full.per_frame, pack.per_frame), 1):
    print(t, a, b)

# %% with half the tokens masked out of the cache, PackCache saturates later
print(float(speedup(13, N, 4, ANCHORS, keep_prob=0.5)))
