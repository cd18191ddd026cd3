"""Pre-provisioned warm pool sizing.

Workloads that can deploy on the fly (deploy_time_ms >= the strict
threshold, i.e. they tolerate a cold start of a minute or more) need no
warm spares; only strict-deploy workloads contribute their forecast
scale-out to the pool. Shrinking the pool to that filtered sum is where
the savings come from.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

STRICT_DEPLOY_THRESHOLD_MS = 60_000


@dataclasses.dataclass(frozen=True)
class PoolInput:
    workload_id: str
    deploy_time_ms: int
    forecast_scale_out_vms: int

    def __post_init__(self) -> None:
        if self.deploy_time_ms < 0 or self.forecast_scale_out_vms < 0:
            raise ValueError("inputs must be >= 0")

    @property
    def strict(self) -> bool:
        return self.deploy_time_ms < STRICT_DEPLOY_THRESHOLD_MS


@dataclasses.dataclass(frozen=True)
class PoolPlan:
    pool_vms: int
    strict_workloads: tuple[str, ...]
    relaxed_workloads: tuple[str, ...]


def pool_size(inputs: Iterable[PoolInput]) -> PoolPlan:
    strict: list[str] = []
    relaxed: list[str] = []
    total = 0
    for item in sorted(inputs, key=lambda i: i.workload_id):
        if item.strict:
            strict.append(item.workload_id)
            total += item.forecast_scale_out_vms
        else:
            relaxed.append(item.workload_id)
    return PoolPlan(
        pool_vms=total,
        strict_workloads=tuple(strict),
        relaxed_workloads=tuple(relaxed),
    )
