import itertools
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packcache.allocation import (
    AllocationPlan,
    DecayParams,
    apply_floors,
    apply_min_quota,
    closed_form_allocation,
    decay_kernel,
    format_plan,
    normalized_allocation,
    plan_allocation,
    token_budgets,
)


# -- oracles -----------------------------------------------------------------

def waterfill_oracle(fractions, b_min):
    """x_i = max(b_min, lam * f_i) with sum(x) = 1, found by enumerating the
    pinned set instead of iterating."""
    w = len(fractions)
    for k in range(w + 1):
        for pinned in itertools.combinations(range(w), k):
            free = [i for i in range(w) if i not in pinned]
            free_mass = sum(fractions[i] for i in free)
            if not free_mass:
                continue
            lam = (1 - k * b_min) / free_mass
            if all(lam * fractions[i] <= b_min for i in pinned) and all(
                lam * fractions[i] >= b_min for i in free
            ):
                return [b_min if i in pinned else lam * fractions[i] for i in range(w)]
    raise AssertionError("no feasible water level")


def rounding_oracle(fractions, b_one):
    """Every floor/ceil vector summing to b_one; pick the one that favours the
    nearest frames (lexicographically largest from d=1)."""
    exact = [b_one * f for f in fractions]
    options = [sorted({math.floor(x), math.ceil(x)}) for x in exact]
    valid = [c for c in itertools.product(*options) if sum(c) == b_one]
    return list(max(valid))


@st.composite
def rational_partitions(draw, max_len=8):
    parts = draw(st.lists(st.integers(1, 1000), min_size=1, max_size=max_len))
    total = sum(parts)
    return [F(p, total) for p in parts]


# -- decay kernel ------------------------------------------------------------

def test_decay_kernel_examples():
    assert decay_kernel(1, DecayParams(0.5)) == 0.5
    assert decay_kernel(3, DecayParams(0.5)) == 0.125
    assert decay_kernel(2, DecayParams(0.7)) == pytest.approx(math.pow(0.7, 2), abs=1e-15)
    assert decay_kernel(2, DecayParams(0.7)) == pytest.approx(0.49)


def test_decay_kernel_rejects_distance_zero():
    with pytest.raises(ValueError):
        decay_kernel(0)


def test_decay_params():
    p = DecayParams(0.25)
    assert abs(p.alpha - math.log(4)) < 1e-12
    assert abs(DecayParams.from_alpha(p.alpha).rho - 0.25) < 1e-12
    for bad in (0, 1, 1.5, -0.2):
        with pytest.raises(ValueError):
            DecayParams(bad)


@given(st.floats(0.01, 0.99), st.integers(1, 60))
def test_decay_kernel_strictly_antitone(rho, d):
    p = DecayParams(rho)
    assert decay_kernel(d + 1, p) < decay_kernel(d, p)
    assert decay_kernel(d, p) > 0


# -- normalized allocation ---------------------------------------------------

def test_normalized_allocation_examples():
    half = DecayParams(F(1, 2))
    assert normalized_allocation(2, half) == [F(2, 3), F(1, 3)]
    assert normalized_allocation(3, half) == [F(4, 7), F(2, 7), F(1, 7)]
    assert normalized_allocation(1, DecayParams(0.3)) == [1.0]


@given(st.floats(0.05, 0.95), st.integers(1, 32))
def test_normalized_allocation_sums_to_one(rho, w):
    b = normalized_allocation(w, DecayParams(rho))
    assert abs(sum(b) - 1) < 1e-12
    for d in range(1, w):
        assert b[d] / b[d - 1] == pytest.approx(rho)


# -- closed form ---------------------------------------------------------------

def test_closed_form_displayed_patterns():
    assert closed_form_allocation(1) == [1]
    assert closed_form_allocation(2) == [F(1, 2), F(1, 2)]
    assert closed_form_allocation(3) == [F(1, 2), F(1, 4), F(1, 4)]
    assert closed_form_allocation(4) == [F(1, 2), F(1, 4), F(1, 8), F(1, 8)]


@pytest.mark.parametrize("w", range(1, 33))
def test_closed_form_structure(w):
    b = closed_form_allocation(w)
    assert sum(b) == 1
    assert all(isinstance(x, F) for x in b)
    assert all(x >= y for x, y in zip(b, b[1:]))
    if w >= 2:
        assert b[-1] == b[-2]
        # proportional to the rho=1/2 kernel everywhere except the doubled tail
        geo = normalized_allocation(w, DecayParams(F(1, 2)))
        ratios = {b[d] / geo[d] for d in range(w - 1)}
        assert len(ratios) == 1


def test_closed_form_rejects_bad_window():
    with pytest.raises(ValueError):
        closed_form_allocation(0)


# -- minimum quota --------------------------------------------------------------

def test_min_quota_zero_is_identity():
    b = closed_form_allocation(4)
    plan = apply_min_quota(b, 0)
    assert list(plan.fractions) == b
    assert plan.effective_window == 4


def test_min_quota_truncates_window():
    plan = apply_min_quota(closed_form_allocation(4), F(3, 4))
    assert plan.effective_window == 1
    assert plan.fractions == (1,)


def test_min_quota_floor_and_renormalize():
    b = closed_form_allocation(4)
    expected = waterfill_oracle(b, F(3, 16))
    # the tail is raised by 1/8 in total, taken 2:1 from 1/2 and 1/4
    assert expected == [F(5, 12), F(5, 24), F(3, 16), F(3, 16)]
    plan = apply_min_quota(b, F(3, 16))
    assert list(plan.fractions) == expected
    assert sum(plan.fractions) == 1


def test_min_quota_rejects_out_of_range():
    with pytest.raises(ValueError):
        apply_min_quota([F(1)], F(3, 2))
    with pytest.raises(ValueError):
        apply_min_quota([F(1)], -1)


@settings(max_examples=200)
@given(rational_partitions(), st.integers(0, 40))
def test_min_quota_matches_waterfill_oracle(parts, k):
    fractions = sorted(parts, reverse=True)
    b_min = F(k, 40 * len(fractions))
    plan = apply_min_quota(fractions, b_min)
    assert sum(plan.fractions) == 1
    assert all(x >= b_min for x in plan.fractions)
    assert list(plan.fractions) == waterfill_oracle(fractions, b_min)
    assert all(x >= y for x, y in zip(plan.fractions, plan.fractions[1:]))


def test_apply_floors_partial():
    # floors only on the two most recent frames; unfloored tail keeps its shape
    out = apply_floors([F(1, 2), F(1, 4), F(1, 8), F(1, 8)], [0, F(3, 8), 0, 0])
    assert sum(out) == 1
    assert out[1] == F(3, 8)
    assert out[2] == out[3]
    assert out[0] / out[2] == 4


# -- token budgets ------------------------------------------------------------

def test_token_budget_examples():
    assert token_budgets([F(1, 2), F(1, 4), F(1, 8), F(1, 8)], 16) == [8, 4, 2, 2]
    assert token_budgets([F(1)], 4084) == [4084]
    b = [F(1, 2), F(1, 4), F(1, 4)]
    assert rounding_oracle(b, 10) == [5, 3, 2]
    assert token_budgets(b, 10) == [5, 3, 2]


def test_token_budgets_rejects_unnormalized():
    with pytest.raises(ValueError):
        token_budgets([F(1, 2)], 10)


@settings(max_examples=300)
@given(rational_partitions(max_len=6), st.integers(1, 10_000))
def test_token_budgets_conserve_and_match_oracle(parts, b_one):
    fractions = sorted(parts, reverse=True)
    t = token_budgets(fractions, b_one)
    assert sum(t) == b_one
    assert sum(t) >= b_one - len(fractions)
    assert all(abs(x - b_one * f) < 1 for x, f in zip(t, fractions))
    assert all(x >= y for x, y in zip(t, t[1:]))
    assert t == rounding_oracle(fractions, b_one)


# -- plans ----------------------------------------------------------------------

def test_plan_modes():
    assert plan_allocation(4, 16).token_budgets == (8, 4, 2, 2)
    # frame-equivalent floor 2**-3 never binds on the closed form
    fe = plan_allocation(4, 16, quota_mode="frame_equivalent", quota_frames=3)
    assert fe.fractions == tuple(closed_form_allocation(4))
    # ... but does on a steeper geometric kernel
    steep = plan_allocation(4, 64, source="geometric", rho=F(1, 4),
                            quota_mode="frame_equivalent", quota_frames=3)
    assert steep.fractions[2] == F(1, 8)
    assert sum(steep.fractions) == 1
    strict = plan_allocation(4, 16, quota_mode="strict", quota_frames=3)
    assert strict.effective_window == 1
    assert strict.token_budgets == (16,)
    with pytest.raises(ValueError):
        plan_allocation(4, quota_mode="bogus")


def test_plan_text_form():
    plan = plan_allocation(4, 16)
    assert format_plan(plan) == "W=4 b=[1/2,1/4,1/8,1/8] t=[8,4,2,2]"
    assert str(AllocationPlan((F(1),))) == "W=1 b=[1]"
