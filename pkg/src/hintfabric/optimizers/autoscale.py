"""Auto-scaling: grow/shrink a workload's VM count from utilization.

Only workloads that opted in via scale_out_in (and a non-zero delay
tolerance, see eligibility) are ticked. Two policy kinds:

* threshold: keep average utilization near a target; the instance count
  that achieves it is ceil(current * util / threshold).
* schedule: follow a fixed (start_ms, count) step function.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Sequence


@dataclasses.dataclass(frozen=True)
class ScalePolicy:
    kind: str = "threshold"  # "threshold" | "schedule"
    threshold_pct: float = 70.0
    schedule: Sequence[tuple[int, int]] = ()  # (start_ms, count), sorted
    min_vms: int = 1
    max_vms: int = 1_000_000

    def __post_init__(self) -> None:
        if self.kind not in ("threshold", "schedule"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "threshold" and self.threshold_pct <= 0:
            raise ValueError("threshold_pct must be positive")
        if self.min_vms < 0 or self.max_vms < self.min_vms:
            raise ValueError("need 0 <= min_vms <= max_vms")


@dataclasses.dataclass(frozen=True)
class ScaleAction:
    workload_id: str
    current_vms: int
    target_vms: int

    @property
    def delta(self) -> int:
        return self.target_vms - self.current_vms


def tick(
    workload_id: str,
    current_vms: int,
    utilization_pct: float,
    policy: ScalePolicy,
    now_ms: int = 0,
) -> ScaleAction:
    """Compute the target VM count for one evaluation round."""
    if current_vms < 0:
        raise ValueError("current_vms must be >= 0")
    if policy.kind == "schedule":
        target = policy.min_vms
        for start_ms, count in policy.schedule:
            if start_ms <= now_ms:
                target = count
            else:
                break
    else:
        # util==0 collapses to the floor; util>threshold grows proportionally
        target = math.ceil(current_vms * utilization_pct / policy.threshold_pct)
    target = max(policy.min_vms, min(policy.max_vms, target))
    return ScaleAction(workload_id=workload_id, current_vms=current_vms, target_vms=target)
