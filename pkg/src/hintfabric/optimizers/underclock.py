"""Underclocking: drop idle, low-availability VMs one frequency step.

Runs on VMs whose hints allow it (availability <= 3 nines, nonzero delay
tolerance; caller filters via eligibility). A VM gets throttled to -1
when its recent utilization sits under the idle threshold; a VM the
workload flagged prefer_shrink is throttled even when busy. Underclock
never goes past -1 (deeper steps are reserved for capacity emergencies)
and restores to nominal once utilization recovers.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

from ..hints import ScalePreference
from ..ids import FrequencyLevel

IDLE_THRESHOLD_PCT = 10.0


@dataclasses.dataclass(frozen=True)
class UnderclockCandidate:
    vm_id: str
    utilization_pct: float
    level: FrequencyLevel = FrequencyLevel.NOMINAL
    preference: ScalePreference = ScalePreference.NEUTRAL


@dataclasses.dataclass(frozen=True)
class FrequencyAction:
    vm_id: str
    from_level: FrequencyLevel
    to_level: FrequencyLevel


def plan(
    candidates: Iterable[UnderclockCandidate],
    idle_threshold_pct: float = IDLE_THRESHOLD_PCT,
) -> list[FrequencyAction]:
    actions: list[FrequencyAction] = []
    for cand in sorted(candidates, key=lambda c: c.vm_id):
        idle = cand.utilization_pct < idle_threshold_pct
        wants_shrink = cand.preference is ScalePreference.PREFER_SHRINK
        if idle or wants_shrink:
            target = FrequencyLevel.THROTTLE_1
        else:
            target = FrequencyLevel.NOMINAL
        # never stack onto emergency throttles, never boost from here
        if cand.level in (FrequencyLevel.THROTTLE_2, FrequencyLevel.BOOST_1, FrequencyLevel.BOOST_2):
            continue
        if target != cand.level:
            actions.append(
                FrequencyAction(vm_id=cand.vm_id, from_level=cand.level, to_level=target)
            )
    return actions
