"""Physical-core oversubscription.

A server is admitted to oversubscribed packing only when every VM on it
tolerates contention (delay tolerance set, p95 CPU under the bar); one
strict VM disqualifies the whole box. Admitted servers pack to 1.5x CPU
and 1.2x memory. When contention does bite, throttle pressure lands on
the lowest scale-priority VMs first.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

from ..hints import ScalePreference

CPU_RATIO = 1.5
MEM_RATIO = 1.2

_PRESSURE_ORDER = {
    ScalePreference.PREFER_SHRINK: 0,
    ScalePreference.NEUTRAL: 1,
    ScalePreference.PREFER_GROW: 2,
}


@dataclasses.dataclass(frozen=True)
class PackedVm:
    vm_id: str
    eligible: bool
    preference: ScalePreference = ScalePreference.NEUTRAL


@dataclasses.dataclass(frozen=True)
class PackingRatios:
    cpu: float
    mem: float


def admit(vms: Iterable[PackedVm]) -> PackingRatios:
    vms = list(vms)
    if vms and all(vm.eligible for vm in vms):
        return PackingRatios(cpu=CPU_RATIO, mem=MEM_RATIO)
    return PackingRatios(cpu=1.0, mem=1.0)


def throttle_order(vms: Iterable[PackedVm]) -> list[str]:
    ranked = sorted(vms, key=lambda v: (_PRESSURE_ORDER[v.preference], v.vm_id))
    return [v.vm_id for v in ranked]
