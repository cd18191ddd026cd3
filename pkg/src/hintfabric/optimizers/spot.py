"""Spot VM eviction planning.

When on-demand needs cores back, spot capacity is reclaimed in runtime
preemption-priority order: every Low VM goes before any Normal, every
Normal before any High. Within a priority tier the youngest VM goes
first (it has the least sunk work). Per-workload concurrency budgets
from the preemptibility hint cap how many of a workload's VMs may be
in eviction at once: floor(vm_count * preemptibility_pct / 100), minus
preemptions already in flight.

Plans are minimal: after the greedy pass, any eviction whose cores are
not needed to stay at or above demand is dropped (checked youngest-
priority-last backwards, so the cheapest victims are released first).
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable, Mapping

from ..hints import NotificationKind, PlatformNotification, PreemptionPriority
from ..ids import OptimizationId

DEFAULT_NOTICE_MS = 30_000


@dataclasses.dataclass(frozen=True)
class SpotCandidate:
    vm_id: str
    workload_id: str
    cores: int
    created_at_ms: int
    priority: PreemptionPriority = PreemptionPriority.NORMAL

    def __post_init__(self) -> None:
        if self.cores <= 0:
            raise ValueError("cores must be positive")


@dataclasses.dataclass(frozen=True)
class WorkloadBudget:
    vm_count: int
    preemptibility_pct: int
    in_flight: int = 0

    @property
    def remaining(self) -> int:
        ceiling = self.vm_count * self.preemptibility_pct // 100
        return max(0, ceiling - self.in_flight)


@dataclasses.dataclass(frozen=True)
class EvictionPlan:
    evict: tuple[SpotCandidate, ...]
    demand_cores: int
    freed_cores: int
    insufficient: bool

    @property
    def vm_ids(self) -> tuple[str, ...]:
        return tuple(c.vm_id for c in self.evict)


def eviction_order(candidates: Iterable[SpotCandidate]) -> list[SpotCandidate]:
    """Victim order: Low tier first, youngest first inside a tier."""
    return sorted(
        candidates,
        key=lambda c: (c.priority.rank, -c.created_at_ms, c.vm_id),
    )


def reclaim(
    demand_cores: int,
    candidates: Iterable[SpotCandidate],
    budgets: Mapping[str, WorkloadBudget] | None = None,
    now_ms: int = 0,
    notice_ms: int = DEFAULT_NOTICE_MS,
    optimization: OptimizationId = OptimizationId.SPOT_VMS,
) -> tuple[EvictionPlan, list[PlatformNotification]]:
    if demand_cores < 0:
        raise ValueError("demand_cores must be >= 0")
    budgets = budgets or {}
    remaining_budget = {w: b.remaining for w, b in budgets.items()}

    chosen: list[SpotCandidate] = []
    freed = 0
    for cand in eviction_order(candidates):
        if freed >= demand_cores:
            break
        if cand.workload_id in remaining_budget:
            if remaining_budget[cand.workload_id] <= 0:
                continue
            remaining_budget[cand.workload_id] -= 1
        chosen.append(cand)
        freed += cand.cores

    # minimality: walk back from the last (cheapest-to-keep) pick and drop
    # anything whose cores are slack
    for i in range(len(chosen) - 1, -1, -1):
        if freed - chosen[i].cores >= demand_cores:
            freed -= chosen[i].cores
            del chosen[i]

    plan = EvictionPlan(
        evict=tuple(chosen),
        demand_cores=demand_cores,
        freed_cores=freed,
        insufficient=freed < demand_cores,
    )
    notifications = [
        PlatformNotification(
            kind=NotificationKind.PREEMPTION,
            vm_id=c.vm_id,
            issued_at_ms=now_ms,
            effective_at_ms=now_ms + notice_ms,
            payload={"cores": c.cores, "workload_id": c.workload_id},
            optimization=optimization,
        )
        for c in plan.evict
    ]
    return plan, notifications
