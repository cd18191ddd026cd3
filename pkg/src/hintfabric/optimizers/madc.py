"""Power and capacity emergency response (datacenter-wide shedding).

When a power event demands a draw reduction, shedding proceeds in two
phases, cheapest disruption first:

1. throttle: every eligible VM (<= 3 nines) steps to -1; if the target
   still is not met, a second pass steps them to -2. Passes walk VMs in
   vm_id order and stop as soon as the running shed covers the target.
2. evict: preemptible VMs go in the spot victim order (priority tier,
   then youngest) until the residual is covered.

Power is modeled in nominal-core units: a VM draws cores x multiplier
for its frequency level, so stepping 4 cores from 0 to -1 sheds
4 x (1.0 - 0.8). Whatever the two phases cannot cover is returned as a
shortfall for the operator.

If the event deadline is shorter than the standard notice period the
notifications are flagged emergency and take effect at the deadline;
workloads still see them, just without the usual lead time.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

from ..hints import NotificationKind, PlatformNotification, PreemptionPriority
from ..ids import FREQUENCY_MULTIPLIER, FrequencyLevel, OptimizationId
from .spot import DEFAULT_NOTICE_MS, SpotCandidate, eviction_order

_EPS = 1e-9


@dataclasses.dataclass(frozen=True)
class ShedCandidate:
    vm_id: str
    workload_id: str
    cores: int
    level: FrequencyLevel = FrequencyLevel.NOMINAL
    throttle_eligible: bool = False   # availability <= 3 nines
    preemptible: bool = False
    created_at_ms: int = 0
    priority: PreemptionPriority = PreemptionPriority.NORMAL

    def power(self, level: FrequencyLevel | None = None) -> float:
        lvl = self.level if level is None else level
        return self.cores * FREQUENCY_MULTIPLIER[int(lvl)]


@dataclasses.dataclass(frozen=True)
class ThrottleStep:
    vm_id: str
    from_level: FrequencyLevel
    to_level: FrequencyLevel
    shed_power: float


@dataclasses.dataclass(frozen=True)
class ShedPlan:
    target_power: float
    throttles: tuple[ThrottleStep, ...]
    evictions: tuple[ShedCandidate, ...]
    shed_power: float
    shortfall_power: float
    emergency: bool


def shed(
    target_power: float,
    vms: Iterable[ShedCandidate],
    now_ms: int = 0,
    notice_ms: int = DEFAULT_NOTICE_MS,
    deadline_ms: int | None = None,
) -> tuple[ShedPlan, list[PlatformNotification]]:
    if target_power < 0:
        raise ValueError("target_power must be >= 0")
    vms = sorted(vms, key=lambda v: v.vm_id)
    emergency = deadline_ms is not None and deadline_ms < notice_ms
    effective_at = now_ms + (deadline_ms if emergency else notice_ms)

    shed_total = 0.0
    level_now: dict[str, FrequencyLevel] = {v.vm_id: v.level for v in vms}
    throttles: list[ThrottleStep] = []
    for step_target in (FrequencyLevel.THROTTLE_1, FrequencyLevel.THROTTLE_2):
        if shed_total >= target_power - _EPS:
            break
        for vm in vms:
            if shed_total >= target_power - _EPS:
                break
            if not vm.throttle_eligible:
                continue
            cur = level_now[vm.vm_id]
            if int(cur) <= int(step_target):
                continue
            gain = vm.power(cur) - vm.power(step_target)
            level_now[vm.vm_id] = step_target
            throttles.append(
                ThrottleStep(vm.vm_id, cur, step_target, gain)
            )
            shed_total += gain

    evicted: list[ShedCandidate] = []
    if shed_total < target_power - _EPS:
        order = eviction_order(
            SpotCandidate(
                vm_id=v.vm_id,
                workload_id=v.workload_id,
                cores=v.cores,
                created_at_ms=v.created_at_ms,
                priority=v.priority,
            )
            for v in vms
            if v.preemptible
        )
        by_id = {v.vm_id: v for v in vms}
        for cand in order:
            if shed_total >= target_power - _EPS:
                break
            vm = by_id[cand.vm_id]
            evicted.append(vm)
            shed_total += vm.power(level_now[vm.vm_id])

    gap = target_power - shed_total
    shortfall = gap if gap > _EPS else 0.0

    notifications: list[PlatformNotification] = []
    for step in throttles:
        notifications.append(
            PlatformNotification(
                kind=NotificationKind.SCALE_DOWN,
                vm_id=step.vm_id,
                issued_at_ms=now_ms,
                effective_at_ms=effective_at,
                payload={
                    "from_level": int(step.from_level),
                    "to_level": int(step.to_level),
                },
                emergency=emergency,
                optimization=OptimizationId.MADC,
            )
        )
    for vm in evicted:
        notifications.append(
            PlatformNotification(
                kind=NotificationKind.PREEMPTION,
                vm_id=vm.vm_id,
                issued_at_ms=now_ms,
                effective_at_ms=effective_at,
                payload={"cores": vm.cores, "workload_id": vm.workload_id},
                emergency=emergency,
                optimization=OptimizationId.MADC,
            )
        )

    plan = ShedPlan(
        target_power=target_power,
        throttles=tuple(throttles),
        evictions=tuple(evicted),
        shed_power=shed_total,
        shortfall_power=shortfall,
        emergency=emergency,
    )
    return plan, notifications
