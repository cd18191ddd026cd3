"""Overclocking: hand out boosted-core slots under power and silicon
reliability budgets.

Both budgets are expressed in boost slots (one slot sustains one core
one level above nominal; +2 costs two slots per core). The effective
budget is the tighter of the two. High scale-up priority VMs are served
first; within a tier slots are split max-min fairly. A VM boosts whole
cores only: leftover slots smaller than its per-core cost stay in the
pool for the next tier.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

from ..arbiter import fair_share
from ..hints import ScalePreference
from ..ids import FrequencyLevel

_TIER_ORDER = (ScalePreference.PREFER_GROW, ScalePreference.NEUTRAL)


@dataclasses.dataclass(frozen=True)
class BoostCandidate:
    vm_id: str
    cores: int
    preference: ScalePreference = ScalePreference.NEUTRAL
    level: FrequencyLevel = FrequencyLevel.BOOST_1

    def __post_init__(self) -> None:
        if self.cores <= 0:
            raise ValueError("cores must be positive")
        if self.level not in (FrequencyLevel.BOOST_1, FrequencyLevel.BOOST_2):
            raise ValueError("overclock level must be +1 or +2")

    @property
    def slots_per_core(self) -> int:
        return int(self.level)

    @property
    def slots_wanted(self) -> int:
        return self.cores * self.slots_per_core


@dataclasses.dataclass(frozen=True)
class BoostGrant:
    vm_id: str
    level: FrequencyLevel
    boosted_cores: int
    slot_cost: int


def plan(
    candidates: Iterable[BoostCandidate],
    power_budget_slots: int,
    reliability_budget_slots: int,
) -> list[BoostGrant]:
    budget = min(power_budget_slots, reliability_budget_slots)
    if budget < 0:
        raise ValueError("budgets must be >= 0")
    tiers: dict[ScalePreference, list[BoostCandidate]] = {p: [] for p in _TIER_ORDER}
    for c in candidates:
        if c.preference in tiers:  # prefer_shrink VMs never ask to boost
            tiers[c.preference].append(c)

    grants: list[BoostGrant] = []
    for pref in _TIER_ORDER:
        tier = sorted(tiers[pref], key=lambda c: c.vm_id)
        if not tier or budget <= 0:
            continue
        shares = fair_share([c.slots_wanted for c in tier], budget, integral=True)
        for cand, slots in zip(tier, shares):
            cores = int(slots) // cand.slots_per_core
            if cores == 0:
                continue
            cost = cores * cand.slots_per_core
            grants.append(
                BoostGrant(
                    vm_id=cand.vm_id,
                    level=cand.level,
                    boosted_cores=cores,
                    slot_cost=cost,
                )
            )
            budget -= cost
    return grants
