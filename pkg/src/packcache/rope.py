"""Mixed 1D/3D rotary position embedding and temporal rebasing.

Visual tokens are rotated by factorized ``(t, h, w)`` coordinates, each axis
owning a contiguous block of rotary pairs and scaled by its own integer
factor. Text tokens may instead use plain 1D rotary over the global
sequence index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cache import Position3D

__all__ = [
    "RopeConfig",
    "REBASE_MODES",
    "rotate",
    "rotate_1d",
    "rotate_heads",
    "rebase",
    "reindex_spatial",
]

REBASE_MODES = ("spatial_preserving", "fully_continuous", "none")


@dataclass(frozen=True)
class RopeConfig:
    head_dim: int = 16
    scale_t: int = 4
    scale_h: int = 8
    scale_w: int = 8
    dims_t: int = 2
    dims_h: int = 3
    dims_w: int = 3
    theta_base: float = 10000.0
    text_rope: str = "1d"

    def __post_init__(self):
        if self.head_dim < 2 or self.head_dim % 2:
            raise ValueError(f"head_dim must be a positive even integer, got {self.head_dim}")
        if self.dims_t + self.dims_h + self.dims_w != self.head_dim // 2:
            raise ValueError("axis dims must sum to head_dim / 2")
        if min(self.dims_t, self.dims_h, self.dims_w) < 0:
            raise ValueError("axis dims must be non-negative")
        if min(self.scale_t, self.scale_h, self.scale_w) < 1:
            raise ValueError("coordinate scales must be >= 1")
        if self.theta_base <= 0:
            raise ValueError("theta_base must be positive")
        if self.text_rope not in ("1d", "3d"):
            raise ValueError(f"text_rope must be '1d' or '3d', got {self.text_rope!r}")

    @classmethod
    def for_head_dim(cls, head_dim: int, **kw) -> RopeConfig:
        """Split ``head_dim / 2`` pairs as t <= h == w, roughly 2:3:3."""
        pairs = head_dim // 2
        hw = (3 * pairs) // 8
        return cls(head_dim=head_dim, dims_t=pairs - 2 * hw, dims_h=hw, dims_w=hw, **kw)

    def with_scales(self, t: int, h: int, w: int) -> RopeConfig:
        return replace(self, scale_t=t, scale_h=h, scale_w=w)

    def frequencies(self) -> np.ndarray:
        """Per-pair frequencies, t block then h block then w block."""
        blocks = [
            self.theta_base ** (-np.arange(n) / n) if n else np.empty(0)
            for n in (self.dims_t, self.dims_h, self.dims_w)
        ]
        return np.concatenate(blocks)

    def angles(self, coords: np.ndarray) -> np.ndarray:
        """Rotation angles for integer coords of shape ``(..., 3)``."""
        coords = np.asarray(coords, dtype=np.float64)
        scaled = coords * np.array([self.scale_t, self.scale_h, self.scale_w], dtype=np.float64)
        axis = np.repeat(np.arange(3), [self.dims_t, self.dims_h, self.dims_w])
        return scaled[..., axis] * self.frequencies()


def _coords(pos) -> np.ndarray:
    if isinstance(pos, Position3D):
        return np.array(pos.thw())
    if len(pos) and isinstance(pos[0], Position3D):
        return np.array([p.thw() for p in pos])
    return np.asarray(pos)


def _apply(vec: np.ndarray, theta: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    even, odd = vec[..., 0::2], vec[..., 1::2]
    cos, sin = np.cos(theta), np.sin(theta)
    out = np.empty_like(vec)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rotate(vec: np.ndarray, pos, cfg: RopeConfig = RopeConfig()) -> np.ndarray:
    """Rotate ``vec`` (last axis ``head_dim``) by 3D position(s) ``pos``.

    ``pos`` is a :class:`Position3D`, a sequence of them, or an integer array
    of ``(t, h, w)`` rows broadcastable against ``vec``'s leading axes.
    """
    vec = np.asarray(vec)
    if vec.shape[-1] != cfg.head_dim:
        raise ValueError(f"vector length {vec.shape[-1]} != head_dim {cfg.head_dim}")
    return _apply(vec, cfg.angles(_coords(pos)))


def rotate_1d(vec: np.ndarray, seq, cfg: RopeConfig = RopeConfig()) -> np.ndarray:
    """Standard 1D rotary over all pairs using the global sequence index."""
    vec = np.asarray(vec)
    if vec.shape[-1] != cfg.head_dim:
        raise ValueError(f"vector length {vec.shape[-1]} != head_dim {cfg.head_dim}")
    pairs = cfg.head_dim // 2
    freqs = cfg.theta_base ** (-2.0 * np.arange(pairs) / cfg.head_dim)
    seq = np.asarray(seq, dtype=np.float64)
    return _apply(vec, seq[..., None] * freqs)


def rotate_heads(
    x: np.ndarray,
    positions: Sequence[Position3D],
    cfg: RopeConfig,
    *,
    heads: int = 1,
    one_d: np.ndarray | None = None,
) -> np.ndarray:
    """Rotate rows of ``x`` (shape ``(n, heads * head_dim)``) head by head.

    Rows flagged in ``one_d`` use :func:`rotate_1d` on their ``seq`` index.
    """
    n = x.shape[0]
    if x.shape[1] != heads * cfg.head_dim:
        raise ValueError(f"row width {x.shape[1]} != heads * head_dim")
    if n == 0:
        return np.asarray(x, dtype=np.float64).copy()
    xh = x.reshape(n, heads, cfg.head_dim)
    coords = np.array([p.thw() for p in positions])
    out = rotate(xh, coords[:, None, :], cfg)
    if one_d is not None and np.any(one_d):
        seq = np.array([p.seq for p in positions])[one_d]
        out[one_d] = rotate_1d(xh[one_d], seq[:, None], cfg)
    return out.reshape(n, heads * cfg.head_dim)


def rebase(
    positions: Sequence[Position3D], delta_t: int, *, seq_start: int | None = None
) -> list[Position3D]:
    """Shift temporal indices down by ``delta_t``; ``h`` and ``w`` are untouched.

    With ``seq_start`` the 1D indices are renumbered contiguously from it, in
    input order.
    """
    if delta_t < 0:
        raise ValueError("delta_t must be non-negative")
    bad = [p for p in positions if p.t < delta_t]
    if bad:
        raise ValueError(f"rebase by {delta_t} would make t negative for {bad[0]}")
    out = []
    for i, p in enumerate(positions):
        seq = p.seq if seq_start is None else seq_start + i
        out.append(Position3D(p.t - delta_t, p.h, p.w, seq))
    return out


def reindex_spatial(positions: Sequence[Position3D], frame_width: int) -> list[Position3D]:
    """Pack ``(h, w)`` of surviving tokens into a contiguous raster order.

    This is the fully continuous scheme the spatially preserving rebase is
    compared against; it discards each token's original grid location.
    """
    return [
        Position3D(p.t, *divmod(i, frame_width), p.seq) for i, p in enumerate(positions)
    ]
