"""Deterministic toy generation loop driving a cache policy.

Features are synthetic. The lowest-frequency rotary pair of each axis block
is reserved for structure (the rotation barely moves it) and the remaining
dims carry Gaussian noise. Keys of frame ``s`` carry a unit frame direction
``u_s`` in the reserved dims; queries of frame ``f`` carry
``sum_j (m - j) * u_{f-j}``, scaled so that the query-key logit falls by
``decay_injection`` per frame of distance. Attention to history therefore
decays as ``exp(-decay_injection * d)`` for distances ``d < m``, where ``m``
is the number of reserved dims (6 with the default split); directions repeat
with period ``m``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Mapping

import numpy as np

from .attention import (
    RegionStats,
    accumulate_attention_mass,
    masked_attention,
    region_stats,
    write_region_stats_csv,
)
from .cache import (
    CacheEntry,
    FrameCache,
    KvCache,
    Position3D,
    Region,
    new_cache,
    set_anchors,
)
from .packer import CachePolicy, PackReport, on_frame_complete
from .rng import stream
from .rope import RopeConfig

__all__ = [
    "SimConfig",
    "FrameRecord",
    "GenerationTrace",
    "run",
    "synthesize_frame_features",
    "slow_dims",
    "load_config",
    "parse_config",
]

MAX_TOKENS = 1 << 16

# stream purposes
_ANCHORS, _FEATURES, _MASK = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    num_latent_frames: int = 8
    tokens_per_frame: int = 16
    heads: int = 1
    head_dim: int = 16
    steps_per_frame: int = 8
    bernoulli_keep_prob: float = 0.5
    seed: int = 0
    decay_injection: float = 0.0
    policy: CachePolicy = field(default_factory=CachePolicy)
    prompt_tokens: int = 8
    cond_tokens: int | None = None
    frame_width: int | None = None
    theta_base: float = 10000.0
    text_rope: str = "1d"
    rng: str = "philox"
    check_invariants: bool = True

    def __post_init__(self):
        for name in ("num_latent_frames", "tokens_per_frame", "heads", "head_dim", "steps_per_frame"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.bernoulli_keep_prob <= 1:
            raise ValueError("bernoulli_keep_prob must lie in (0, 1]")
        if self.decay_injection < 0:
            raise ValueError("decay_injection must be non-negative")
        if self.prompt_tokens < 0 or (self.cond_tokens or 0) < 0:
            raise ValueError("anchor token counts must be non-negative")
        if self.num_latent_frames * self.tokens_per_frame > MAX_TOKENS:
            raise ValueError(
                f"T*N = {self.num_latent_frames * self.tokens_per_frame} exceeds the "
                f"desk-scale cap of {MAX_TOKENS}"
            )
        stream(0, algorithm=self.rng)

    @property
    def n_cond(self) -> int:
        return self.tokens_per_frame if self.cond_tokens is None else self.cond_tokens

    @property
    def n_anchors(self) -> int:
        return self.prompt_tokens + self.n_cond

    @property
    def width(self) -> int:
        if self.frame_width is not None:
            return self.frame_width
        return new_cache(1, self.tokens_per_frame, 1, 1).frame_width

    @property
    def d_model(self) -> int:
        return self.heads * self.head_dim

    @property
    def rope(self) -> RopeConfig:
        return RopeConfig.for_head_dim(
            self.head_dim, theta_base=self.theta_base, text_rope=self.text_rope
        )

    def replace(self, **kw) -> SimConfig:
        return dataclasses.replace(self, **kw)


@dataclass
class FrameRecord:
    frame_index: int
    attended_key_count: int
    cache_occupancy: int
    region_stats: list[RegionStats]
    pack_report: PackReport
    wall_time: float


@dataclass
class GenerationTrace:
    config: SimConfig
    frames: list[FrameRecord] = field(default_factory=list)
    final_cache: KvCache | None = None

    @property
    def attended(self) -> list[int]:
        return [r.attended_key_count for r in self.frames]

    @property
    def occupancy(self) -> list[int]:
        return [r.cache_occupancy for r in self.frames]

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["frame_index", "regime", "attended_keys", "occupancy", "kept_per_frame",
             "removed_masked", "removed_by_budget", "evicted_frames"]
        )
        for r in self.frames:
            p = r.pack_report
            writer.writerow(
                [r.frame_index, p.regime, r.attended_key_count, r.cache_occupancy,
                 " ".join(map(str, p.kept)), p.removed_masked, p.removed_by_budget,
                 p.evicted_frames]
            )

    def write_region_stats(self, fh: IO[str]) -> None:
        write_region_stats_csv(
            (s for r in self.frames for s in r.region_stats), fh, with_frame=True
        )

    def summary(self) -> dict[str, Any]:
        cfg = dataclasses.asdict(self.config)
        return {
            "config": cfg,
            "frames": len(self.frames),
            "anchors": self.config.n_anchors,
            "attended_key_count": self.attended,
            "cache_occupancy": self.occupancy,
            "total_attended_keys": sum(self.attended),
            "wall_time": [r.wall_time for r in self.frames],
        }


def slow_dims(cfg: RopeConfig) -> list[int]:
    """Indices (within one head) of the lowest-frequency pair of each axis block."""
    dims = []
    start = 0
    for n in (cfg.dims_t, cfg.dims_h, cfg.dims_w):
        if n:
            pair = start + n - 1
            dims += [2 * pair, 2 * pair + 1]
        start += n
    return dims


def _direction(config: SimConfig, frame_index: int) -> np.ndarray:
    basis = slow_dims(config.rope)
    u = np.zeros(config.head_dim)
    u[basis[(frame_index - 1) % len(basis)]] = 1.0
    return np.tile(u, config.heads)


def synthesize_frame_features(
    config: SimConfig, frame_index: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Queries, keys and values for one refinement step of ``frame_index``."""
    n, d = config.tokens_per_frame, config.d_model
    reserved = slow_dims(config.rope)
    noise_dims = np.ones(config.head_dim)
    noise_dims[reserved] = 0.0
    noise_dims = np.tile(noise_dims, config.heads)
    q = rng.standard_normal((n, d)) * noise_dims
    k = rng.standard_normal((n, d)) * noise_dims
    v = rng.standard_normal((n, d))
    if config.decay_injection:
        a = np.sqrt(config.decay_injection * np.sqrt(config.head_dim))
        m = len(reserved)
        k += a * _direction(config, frame_index)
        for j in range(1, min(frame_index, m)):
            q += a * (m - j) * _direction(config, frame_index - j)
    return q, k, v


def _anchors(config: SimConfig) -> tuple[list[CacheEntry], list[CacheEntry]]:
    rng = stream(config.seed, 0, 0, _ANCHORS, algorithm=config.rng)
    d = config.d_model
    n_p, n_c, w = config.prompt_tokens, config.n_cond, config.width
    keys = rng.standard_normal((n_p + n_c, d))
    values = rng.standard_normal((n_p + n_c, d))
    prompt = [
        CacheEntry(keys[i], values[i], Position3D(0, 0, 0, i), Region.text(), index=i)
        for i in range(n_p)
    ]
    cond = [
        CacheEntry(
            keys[n_p + i], values[n_p + i],
            Position3D(0, *divmod(i, w), n_p + i), Region.cond(), index=i,
        )
        for i in range(n_c)
    ]
    return prompt, cond


def build_cache(config: SimConfig) -> KvCache:
    p = config.policy
    w = config.num_latent_frames if p.kind == "full" else p.window
    cache = new_cache(
        w, config.tokens_per_frame, config.d_model, config.d_model, frame_width=config.width
    )
    return set_anchors(cache, *_anchors(config))


def run(config: SimConfig) -> GenerationTrace:
    policy, rope = config.policy, config.rope
    n, width = config.tokens_per_frame, config.width
    cache = build_cache(config)
    trace = GenerationTrace(config)

    for f in range(1, config.num_latent_frames + 1):
        start = time.perf_counter()
        if policy.mass_mode == "per_frame":
            cache.reset_attention_mass()
        shift = cache.dropped_frames if policy.rope_rebase != "none" else 0
        if policy.kind == "full" or policy.rope_rebase == "none":
            seq0 = config.n_anchors + (f - 1) * n
        else:
            seq0 = cache.occupancy
        positions = [Position3D(f - shift, *divmod(i, width), seq0 + i) for i in range(n)]
        own_mass = np.zeros(n)
        stats = []
        for step in range(config.steps_per_frame):
            rng = stream(config.seed, f, step, _FEATURES, algorithm=config.rng)
            q, k, v = synthesize_frame_features(config, f, rng)
            current = FrameCache(
                f,
                [CacheEntry(k[i], v[i], positions[i], Region.history(f), index=i) for i in range(n)],
                n,
            )
            res = masked_attention(q, cache, current, rope, heads=config.heads)
            accumulate_attention_mass(res)
            own_mass += [e.attn_mass for e in current.entries]
            stats.append(region_stats(res.weights, res.layout, step=step, frame_index=f))
        attended = res.attended_keys

        mask_rng = stream(config.seed, f, 0, _MASK, algorithm=config.rng)
        masked = mask_rng.random(n) >= config.bernoulli_keep_prob
        for e, m, mass in zip(current.entries, masked, own_mass):
            e.masked = bool(m)
            e.attn_mass = float(mass)
        cache, report = on_frame_complete(cache, current, policy)

        if config.check_invariants:
            packed = report.regime in ("pack", "slide") or (
                report.regime == "sliding" and cache.window_capacity == 1
            )
            cache.check_invariants(packed=packed)

        trace.frames.append(
            FrameRecord(f, attended, cache.occupancy, stats, report, time.perf_counter() - start)
        )
    trace.final_cache = cache
    return trace


_POLICY_FIELDS = {f.name: f for f in dataclasses.fields(CachePolicy)}
_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_OPTIONAL_INT = {"cond_tokens", "frame_width"}
_ALIASES = {"policy": "kind", "keep_prob": "bernoulli_keep_prob", "frames": "num_latent_frames",
            "tokens": "tokens_per_frame", "w": "window"}


def _coerce(name: str, default: Any, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if name in _OPTIONAL_INT:
        return None if raw.lower() in ("", "none") else int(raw)
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(values: Mapping[str, Any]) -> SimConfig:
    """Build a :class:`SimConfig` from flat keys; policy keys sit alongside."""
    sim_kw: dict[str, Any] = {}
    pol_kw: dict[str, Any] = {}
    defaults_sim, defaults_pol = SimConfig(), CachePolicy()
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        key = _ALIASES.get(key, key)
        if key in _POLICY_FIELDS:
            pol_kw[key] = _coerce(key, getattr(defaults_pol, key), raw)
        elif key in _SIM_FIELDS and key != "policy":
            sim_kw[key] = _coerce(key, getattr(defaults_sim, key), raw)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return SimConfig(policy=CachePolicy(**pol_kw), **sim_kw)


def load_config(path: str | Path) -> SimConfig:
    """Read ``key = value`` lines (``#`` comments) or, for ``.json``, an object."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        return parse_config(json.loads(text))
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value
    return parse_config(values)
