"""Optimization onboarding registry.

Every optimization declares what it consumes (hint channels), what it may
publish (notification kinds), which resource kinds it claims, and its
arbitration priority. Priorities must be unique: they are the total order
the arbiter uses. The ten built-ins plus the on-demand pseudo-entry are
registered by builtin_registry(); new optimizations onboard at unused
priorities (e.g. 11+) without touching existing ones.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable

from ..hints import NotificationKind
from ..ids import PRIORITY, OptimizationId, ResourceKind

# consume-channel vocabulary
DEPLOY_SCALE_UP_DOWN = "deployment:scale_up_down"
DEPLOY_SCALE_OUT_IN = "deployment:scale_out_in"
DEPLOY_DEPLOY_TIME = "deployment:deploy_time"
DEPLOY_AVAILABILITY = "deployment:availability"
DEPLOY_PREEMPTIBILITY = "deployment:preemptibility"
DEPLOY_DELAY_TOLERANCE = "deployment:delay_tolerance"
DEPLOY_REGION_INDEPENDENCE = "deployment:region_independence"
RUNTIME_PREEMPTION_PRIORITY = "runtime:preemption_priority"
RUNTIME_SCALE_PREFERENCE = "runtime:scale_preference"

CONSUME_CHANNELS = frozenset(
    {
        DEPLOY_SCALE_UP_DOWN,
        DEPLOY_SCALE_OUT_IN,
        DEPLOY_DEPLOY_TIME,
        DEPLOY_AVAILABILITY,
        DEPLOY_PREEMPTIBILITY,
        DEPLOY_DELAY_TOLERANCE,
        DEPLOY_REGION_INDEPENDENCE,
        RUNTIME_PREEMPTION_PRIORITY,
        RUNTIME_SCALE_PREFERENCE,
    }
)


class DuplicatePriorityError(ValueError):
    pass


class UnknownResourceKindError(ValueError):
    pass


class UnknownChannelError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class OptimizerDescriptor:
    optimization: str
    priority: int
    resources: frozenset[str]
    consumes: frozenset[str] = frozenset()
    publishes: frozenset[NotificationKind] = frozenset()


class Registry:
    def __init__(self) -> None:
        self._by_id: dict[str, OptimizerDescriptor] = {}
        self._by_priority: dict[int, str] = {}

    def onboard(self, desc: OptimizerDescriptor) -> OptimizerDescriptor:
        if desc.optimization in self._by_id:
            raise ValueError(f"{desc.optimization} already onboarded")
        holder = self._by_priority.get(desc.priority)
        if holder is not None:
            raise DuplicatePriorityError(
                f"priority {desc.priority} already held by {holder}"
            )
        known = {r.value for r in ResourceKind}
        for res in desc.resources:
            value = res.value if isinstance(res, ResourceKind) else res
            if value not in known:
                raise UnknownResourceKindError(value)
        for chan in desc.consumes:
            if chan not in CONSUME_CHANNELS:
                raise UnknownChannelError(chan)
        self._by_id[desc.optimization] = desc
        self._by_priority[desc.priority] = desc.optimization
        return desc

    def get(self, optimization: str) -> OptimizerDescriptor:
        return self._by_id[str(optimization)]

    def all(self) -> list[OptimizerDescriptor]:
        return [self._by_id[self._by_priority[p]] for p in sorted(self._by_priority)]

    def priorities(self) -> dict[str, int]:
        return {o: d.priority for o, d in self._by_id.items()}


def _rk(*kinds: ResourceKind) -> frozenset[str]:
    return frozenset(k.value for k in kinds)


_N = NotificationKind

_BUILTINS: tuple[OptimizerDescriptor, ...] = (
    OptimizerDescriptor(
        optimization=OptimizationId.ON_DEMAND.value,
        priority=PRIORITY[OptimizationId.ON_DEMAND],
        resources=_rk(ResourceKind.SPARE_COMPUTE, ResourceKind.CAPACITY),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.MADC.value,
        priority=PRIORITY[OptimizationId.MADC],
        resources=_rk(ResourceKind.CPU_FREQUENCY, ResourceKind.SPARE_COMPUTE),
        consumes=frozenset({DEPLOY_SCALE_UP_DOWN, DEPLOY_PREEMPTIBILITY}),
        publishes=frozenset({_N.SCALE_DOWN, _N.PREEMPTION}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.RIGHTSIZING.value,
        priority=PRIORITY[OptimizationId.RIGHTSIZING],
        resources=_rk(ResourceKind.SPARE_COMPUTE),
        consumes=frozenset({DEPLOY_SCALE_UP_DOWN, DEPLOY_DELAY_TOLERANCE}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.OVERSUBSCRIPTION.value,
        priority=PRIORITY[OptimizationId.OVERSUBSCRIPTION],
        resources=_rk(ResourceKind.SPARE_COMPUTE),
        consumes=frozenset(
            {DEPLOY_SCALE_UP_DOWN, DEPLOY_DELAY_TOLERANCE, RUNTIME_SCALE_PREFERENCE}
        ),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.AUTO_SCALING.value,
        priority=PRIORITY[OptimizationId.AUTO_SCALING],
        resources=_rk(ResourceKind.CAPACITY),
        consumes=frozenset({DEPLOY_SCALE_OUT_IN}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.NON_PRE_PROVISION.value,
        priority=PRIORITY[OptimizationId.NON_PRE_PROVISION],
        resources=_rk(ResourceKind.SPARE_COMPUTE, ResourceKind.CAPACITY),
        consumes=frozenset({DEPLOY_DEPLOY_TIME}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.REGION_AGNOSTIC.value,
        priority=PRIORITY[OptimizationId.REGION_AGNOSTIC],
        resources=_rk(ResourceKind.REGION_SLOT),
        consumes=frozenset({DEPLOY_REGION_INDEPENDENCE}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.UNDERCLOCKING.value,
        priority=PRIORITY[OptimizationId.UNDERCLOCKING],
        resources=_rk(ResourceKind.CPU_FREQUENCY),
        consumes=frozenset({DEPLOY_SCALE_UP_DOWN, RUNTIME_SCALE_PREFERENCE}),
        publishes=frozenset({_N.SCALE_DOWN}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.OVERCLOCKING.value,
        priority=PRIORITY[OptimizationId.OVERCLOCKING],
        resources=_rk(ResourceKind.CPU_FREQUENCY),
        consumes=frozenset({DEPLOY_SCALE_UP_DOWN, RUNTIME_SCALE_PREFERENCE}),
        publishes=frozenset({_N.SCALE_UP}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.SPOT_VMS.value,
        priority=PRIORITY[OptimizationId.SPOT_VMS],
        resources=_rk(ResourceKind.SPARE_COMPUTE),
        consumes=frozenset({DEPLOY_PREEMPTIBILITY, RUNTIME_PREEMPTION_PRIORITY}),
        publishes=frozenset({_N.PREEMPTION}),
    ),
    OptimizerDescriptor(
        optimization=OptimizationId.HARVEST_VMS.value,
        priority=PRIORITY[OptimizationId.HARVEST_VMS],
        resources=_rk(ResourceKind.SPARE_COMPUTE),
        consumes=frozenset(
            {
                DEPLOY_PREEMPTIBILITY,
                DEPLOY_SCALE_UP_DOWN,
                RUNTIME_PREEMPTION_PRIORITY,
                RUNTIME_SCALE_PREFERENCE,
            }
        ),
        publishes=frozenset({_N.PREEMPTION, _N.SCALE_UP, _N.SCALE_DOWN}),
    ),
)


def builtin_registry() -> Registry:
    reg = Registry()
    for desc in _BUILTINS:
        reg.onboard(desc)
    return reg


def builtin_descriptor(optimization: OptimizationId) -> OptimizerDescriptor:
    for d in _BUILTINS:
        if d.optimization == optimization.value:
            return d
    raise KeyError(optimization)
