"""PackCache: budget-bounded KV-cache management for frame-structured
autoregressive generation, with full-cache and sliding-window baselines, a
toy attention simulator and an analytic cost model."""

from .allocation import (
    AllocationPlan,
    DecayParams,
    apply_min_quota,
    closed_form_allocation,
    decay_kernel,
    normalized_allocation,
    plan_allocation,
    token_budgets,
)
from .attention import RegionStats, masked_attention, region_stats
from .cache import (
    CacheEntry,
    FrameCache,
    KvCache,
    Position3D,
    Region,
    new_cache,
    set_anchors,
)
from .cost import cost_model, speedup
from .packer import CachePolicy, PackReport, on_frame_complete, select_tokens
from .rope import RopeConfig, rebase, rotate
from .simulator import GenerationTrace, SimConfig, run

__version__ = "0.1.0"
