"""Harvest VM core rebalancing.

Harvest VMs keep a guaranteed base core count and absorb whatever spare
cores the server has left; the spare pool breathes as on-demand churn
changes it. Runtime scale preferences steer who gains and who gives:

* growing (delta > 0): prefer_grow VMs split the new cores max-min
  fairly first, then neutral VMs take the remainder; prefer_shrink
  VMs never gain.
* shrinking (delta < 0): reclaim from prefer_shrink, then neutral,
  then prefer_grow, never below base. If harvested cores run out the
  residual is reported as a deficit for the caller to escalate (evict
  via the spot path).

Core conservation: sum(action deltas) == delta whenever fully
satisfiable, == delta + deficit otherwise.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable, Sequence

from ..arbiter import fair_share
from ..hints import ScalePreference

_GROW_ORDER = (ScalePreference.PREFER_GROW, ScalePreference.NEUTRAL)
_SHRINK_ORDER = (
    ScalePreference.PREFER_SHRINK,
    ScalePreference.NEUTRAL,
    ScalePreference.PREFER_GROW,
)


@dataclasses.dataclass(frozen=True)
class HarvestVm:
    vm_id: str
    base_cores: int
    harvested_cores: int
    preference: ScalePreference = ScalePreference.NEUTRAL
    max_harvest: int | None = None  # cap on harvested_cores, None = unbounded

    def __post_init__(self) -> None:
        if self.base_cores < 0 or self.harvested_cores < 0:
            raise ValueError("core counts must be >= 0")
        if self.max_harvest is not None and self.harvested_cores > self.max_harvest:
            raise ValueError("harvested_cores exceeds max_harvest")

    @property
    def headroom(self) -> int | None:
        if self.max_harvest is None:
            return None
        return self.max_harvest - self.harvested_cores


@dataclasses.dataclass(frozen=True)
class RebalanceAction:
    vm_id: str
    delta_cores: int  # positive = grant, negative = reclaim


@dataclasses.dataclass(frozen=True)
class RebalancePlan:
    actions: tuple[RebalanceAction, ...]
    deficit_cores: int  # unmet shrink, escalate to eviction

    @property
    def moved(self) -> int:
        return sum(a.delta_cores for a in self.actions)


def _tiered(vms: Iterable[HarvestVm], order: Sequence[ScalePreference]) -> list[list[HarvestVm]]:
    tiers: dict[ScalePreference, list[HarvestVm]] = {p: [] for p in order}
    for vm in vms:
        if vm.preference in tiers:
            tiers[vm.preference].append(vm)
    # stable within a tier by vm_id so plans are reproducible
    return [sorted(tiers[p], key=lambda v: v.vm_id) for p in order]


def rebalance(delta_cores: int, vms: Iterable[HarvestVm]) -> RebalancePlan:
    vms = list(vms)
    if delta_cores == 0:
        return RebalancePlan(actions=(), deficit_cores=0)
    grants: dict[str, int] = {}

    if delta_cores > 0:
        left = delta_cores
        for tier in _tiered(vms, _GROW_ORDER):
            if left <= 0 or not tier:
                continue
            # unbounded headroom bids for everything that's left
            demands = [left if v.headroom is None else min(v.headroom, left) for v in tier]
            shares = fair_share(demands, left, integral=True)
            for vm, got in zip(tier, shares):
                if got:
                    grants[vm.vm_id] = grants.get(vm.vm_id, 0) + int(got)
            left -= int(sum(shares))
        deficit = 0
    else:
        need = -delta_cores
        for tier in _tiered(vms, _SHRINK_ORDER):
            if need <= 0 or not tier:
                continue
            shrinkable = [v.harvested_cores for v in tier]
            shares = fair_share(shrinkable, min(need, sum(shrinkable)), integral=True)
            for vm, took in zip(tier, shares):
                if took:
                    grants[vm.vm_id] = grants.get(vm.vm_id, 0) - int(took)
            need -= int(sum(shares))
        deficit = need

    actions = tuple(
        RebalanceAction(vm_id=vm_id, delta_cores=delta)
        for vm_id, delta in sorted(grants.items())
        if delta != 0
    )
    return RebalancePlan(actions=actions, deficit_cores=deficit)
