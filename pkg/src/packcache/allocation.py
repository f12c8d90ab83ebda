"""Per-frame budget allocation from a temporal decay kernel.

History frames are indexed by distance ``d`` from the frame being generated,
``d = 1`` being the most recent. Budgets are fractions of a one-frame token
budget ``b_one`` and are kept as exact :class:`fractions.Fraction` values so
that plans sum to one without rounding slop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

__all__ = [
    "DecayParams",
    "AllocationPlan",
    "decay_kernel",
    "normalized_allocation",
    "closed_form_allocation",
    "apply_min_quota",
    "apply_floors",
    "token_budgets",
    "frame_equivalent_floors",
    "format_plan",
    "plan_allocation",
    "QUOTA_MODES",
]

QUOTA_MODES = ("none", "frame_equivalent", "strict")


@dataclass(frozen=True)
class DecayParams:
    """Exponential decay ``g(d) = rho**d``; ``alpha = -ln(rho)``."""

    rho: float | Fraction = Fraction(1, 2)
    c: float = 1.0

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.c <= 0:
            raise ValueError("normalization constant must be positive")

    @classmethod
    def from_alpha(cls, alpha: float, c: float = 1.0) -> DecayParams:
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        return cls(rho=math.exp(-alpha), c=c)

    @property
    def alpha(self) -> float:
        return -math.log(self.rho)

    def mean_attention(self, d: int) -> float:
        """Modelled mean attention of the d-th previous frame, ``c * rho**d``."""
        return self.c * float(self.rho) ** d


@dataclass(frozen=True)
class AllocationPlan:
    fractions: tuple[Fraction, ...]
    token_budgets: tuple[int, ...] = ()
    effective_window: int = 0
    b_min: Fraction = Fraction(0)
    b_one: int | None = None

    def __post_init__(self):
        if not self.effective_window:
            object.__setattr__(self, "effective_window", len(self.fractions))

    @property
    def window(self) -> int:
        return len(self.fractions)

    def with_budget(self, b_one: int) -> AllocationPlan:
        return AllocationPlan(
            fractions=self.fractions,
            token_budgets=tuple(token_budgets(self.fractions, b_one)),
            effective_window=self.effective_window,
            b_min=self.b_min,
            b_one=b_one,
        )

    def __str__(self) -> str:
        return format_plan(self)


def _check_window(w: int) -> None:
    if int(w) != w or w < 1:
        raise ValueError(f"window must be a positive integer, got {w}")


def decay_kernel(d: int, params: DecayParams = DecayParams()) -> float | Fraction:
    if d < 1:
        raise ValueError(f"distance must be >= 1, got {d}")
    return params.rho**d


def normalized_allocation(w: int, params: DecayParams = DecayParams()) -> list:
    """Normalize the decay kernel over ``w`` history frames.

    Returns floats for a float ``rho`` and exact fractions for a
    :class:`~fractions.Fraction` ``rho``.
    """
    _check_window(w)
    g = [decay_kernel(d, params) for d in range(1, w + 1)]
    total = sum(g)
    return [x / total for x in g]


def closed_form_allocation(w: int) -> list[Fraction]:
    """One-frame half-life allocation ``b_d = 2**-min(d, w-1)``."""
    _check_window(w)
    return [Fraction(1, 2 ** min(d, w - 1)) for d in range(1, w + 1)]


def apply_floors(
    fractions: Sequence[Fraction], floors: Sequence[Fraction]
) -> list[Fraction]:
    """Raise entries to their floors and take the extra mass proportionally
    from the entries that stay above their floor.

    Entries pushed under their floor by the deduction are pinned in turn, so
    the loop runs at most ``len(fractions)`` times.
    """
    fractions = [Fraction(f) for f in fractions]
    floors = [Fraction(f) for f in floors]
    if len(floors) != len(fractions):
        raise ValueError("floors and fractions differ in length")
    if sum(floors) > 1:
        raise ValueError("floors sum to more than one")
    target = sum(fractions)
    pinned = [f < lo for f, lo in zip(fractions, floors)]
    while True:
        free = [i for i, p in enumerate(pinned) if not p]
        free_mass = sum(fractions[i] for i in free)
        room = target - sum(floors[i] for i, p in enumerate(pinned) if p)
        scale = room / free_mass if free_mass else Fraction(0)
        out = [
            floors[i] if pinned[i] else fractions[i] * scale
            for i in range(len(fractions))
        ]
        newly = [i for i in free if out[i] < floors[i]]
        if not newly:
            return out
        for i in newly:
            pinned[i] = True


def apply_min_quota(
    fractions: Sequence[Fraction], b_min: Fraction | int | str = 0
) -> AllocationPlan:
    """Floor every fraction at ``b_min``.

    When ``len(fractions) * b_min > 1`` the oldest frames are dropped (FIFO)
    until the floor is feasible, and the surviving prefix is renormalized.
    """
    b_min = Fraction(b_min)
    if b_min < 0 or b_min > 1:
        raise ValueError(f"b_min must lie in [0, 1], got {b_min}")
    fractions = [Fraction(f) for f in fractions]
    w = len(fractions)
    if b_min == 0:
        return AllocationPlan(tuple(fractions), effective_window=w, b_min=b_min)
    w_eff = w
    while w_eff * b_min > 1:
        w_eff -= 1
    kept = fractions[:w_eff]
    if w_eff < w:
        total = sum(kept)
        kept = [f / total for f in kept]
    floored = apply_floors(kept, [b_min] * w_eff)
    return AllocationPlan(tuple(floored), effective_window=w_eff, b_min=b_min)


def frame_equivalent_floors(w: int, quota_frames: int) -> list[Fraction]:
    """Floors of ``2**-quota_frames`` on the ``quota_frames`` most recent frames."""
    _check_window(w)
    if quota_frames < 1:
        raise ValueError("quota_frames must be >= 1")
    lo = Fraction(1, 2**quota_frames)
    return [lo if d <= quota_frames else Fraction(0) for d in range(1, w + 1)]


def token_budgets(fractions: Sequence[Fraction], b_one: int) -> list[int]:
    """Integer budgets ``floor(b_one * b_d)`` plus the leftover tokens.

    Leftover tokens go one each to the entries with a nonzero remainder,
    nearest frame (smallest d) first, so the result sums to ``b_one``.
    """
    if b_one < 1:
        raise ValueError("b_one must be >= 1")
    fractions = [Fraction(f) for f in fractions]
    if sum(fractions) != 1:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    exact = [b_one * f for f in fractions]
    out = [math.floor(x) for x in exact]
    residual = b_one - sum(out)
    for i, x in enumerate(exact):
        if residual == 0:
            break
        if x != out[i]:
            out[i] += 1
            residual -= 1
    return out


def format_plan(plan: AllocationPlan) -> str:
    b = ",".join(str(f) for f in plan.fractions)
    text = f"W={plan.window} b=[{b}]"
    if plan.token_budgets:
        text += " t=[" + ",".join(str(t) for t in plan.token_budgets) + "]"
    return text


def plan_allocation(
    w: int,
    b_one: int | None = None,
    *,
    source: str = "closed_form",
    rho: float | Fraction = Fraction(1, 2),
    quota_mode: str = "none",
    quota_frames: int = 3,
    b_min: Fraction | None = None,
) -> AllocationPlan:
    """Build a full plan for ``w`` history frames.

    ``quota_mode`` selects how a k-frame quota is read:

    * ``"none"``: no floor unless ``b_min`` is given explicitly.
    * ``"strict"``: ``b_min = k / w`` through :func:`apply_min_quota`, which
      truncates the window whenever ``k > 1``.
    * ``"frame_equivalent"``: the ``k`` most recent frames are floored at
      ``2**-k``; the window is never truncated.
    """
    if source == "closed_form":
        base = closed_form_allocation(w)
    elif source == "geometric":
        base = normalized_allocation(w, DecayParams(rho=Fraction(rho)))
    else:
        raise ValueError(f"unknown plan source {source!r}")

    if quota_mode == "none":
        plan = apply_min_quota(base, b_min or 0)
    elif quota_mode == "strict":
        plan = apply_min_quota(base, Fraction(quota_frames, w))
    elif quota_mode == "frame_equivalent":
        floors = frame_equivalent_floors(w, quota_frames)
        plan = AllocationPlan(tuple(apply_floors(base, floors)), effective_window=w)
    else:
        raise ValueError(f"unknown quota mode {quota_mode!r}")
    return plan.with_budget(b_one) if b_one is not None else plan
