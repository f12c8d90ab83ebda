"""
Full cache, sliding window and PackCache side by side
=====================================================

Runs the toy generator under each policy and prints how many keys every
frame attends to and how much the cache holds.
"""

# %%
from packcache import CachePolicy, SimConfig, run

cfg = SimConfig(num_latent_frames=10, tokens_per_frame=32, bernoulli_keep_prob=0.5, seed=1)
policies = {
    "full": CachePolicy.full(),
    "sliding": CachePolicy.sliding(),
    "packcache": CachePolicy.packcache(window=4),
}
traces = {name: run(cfg.replace(policy=p)) for name, p in policies.items()}

# %%
print("frame", *(f"{n:>10}" for n in traces))
for i in range(cfg.num_latent_frames):
    print(f"{i + 1:5d}", *(f"{t.occupancy[i]:10d}" for t in traces.values()))

# %% what PackCache kept from each history frame, newest first
for rec in traces["packcache"].frames:
    r = rec.pack_report
    print(rec.frame_index, r.regime, r.kept, "masked dropped:", r.removed_masked)
