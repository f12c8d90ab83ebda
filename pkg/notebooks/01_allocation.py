"""
Splitting one frame's budget across history
===========================================

Recent frames get more of the budget than old ones. This walks through the
closed-form split, the geometric alternative and the integer rounding.
"""

# %%
from fractions import Fraction

from packcache.allocation import (
    DecayParams,
    closed_form_allocation,
    normalized_allocation,
    plan_allocation,
)

for w in range(1, 6):
    print(w, [str(b) for b in closed_form_allocation(w)])

# %% the geometric kernel normalized over W frames puts less on the tail
half = DecayParams(Fraction(1, 2))
print([str(b) for b in normalized_allocation(4, half)])

# %% token counts for a 4084-token frame; rounding residue goes to recent frames
print(plan_allocation(4, 4084))
print(plan_allocation(3, 10))

# %% a uniform minimum quota; too large a floor shrinks the window
print(plan_allocation(4, 64, b_min=Fraction(3, 16)))
print(plan_allocation(4, 64, b_min=Fraction(3, 4)))
