"""Platform-wide identifiers shared by every layer.

The priority table is the single source of truth for conflict resolution:
a lower number always wins capacity first. Regular (on-demand) usage is
modeled as a pseudo-optimization at priority 0 so that it participates in
arbitration and outranks everything else.
"""

from __future__ import annotations

import enum


class OptimizationId(str, enum.Enum):
    ON_DEMAND = "on_demand"
    MADC = "madc"
    RIGHTSIZING = "rightsizing"
    OVERSUBSCRIPTION = "oversubscription"
    AUTO_SCALING = "auto_scaling"
    NON_PRE_PROVISION = "non_pre_provision"
    REGION_AGNOSTIC = "region_agnostic"
    UNDERCLOCKING = "underclocking"
    OVERCLOCKING = "overclocking"
    SPOT_VMS = "spot_vms"
    HARVEST_VMS = "harvest_vms"

    def __str__(self) -> str:  # keep yaml/csv output as the bare value
        return self.value

    @property
    def priority(self) -> int:
        return PRIORITY[self]


# Built-in arbitration priorities (lower number = served first).
PRIORITY: dict[OptimizationId, int] = {
    OptimizationId.ON_DEMAND: 0,
    OptimizationId.MADC: 1,
    OptimizationId.RIGHTSIZING: 2,
    OptimizationId.OVERSUBSCRIPTION: 3,
    OptimizationId.AUTO_SCALING: 4,
    OptimizationId.NON_PRE_PROVISION: 5,
    OptimizationId.REGION_AGNOSTIC: 6,
    OptimizationId.UNDERCLOCKING: 7,
    OptimizationId.OVERCLOCKING: 8,
    OptimizationId.SPOT_VMS: 9,
    OptimizationId.HARVEST_VMS: 10,
}


class ResourceKind(str, enum.Enum):
    SPARE_COMPUTE = "spare_compute"    # unallocated server cores
    CPU_FREQUENCY = "cpu_frequency"    # boosted-core slots
    CAPACITY = "capacity"              # deployable VM slots (pools)
    REGION_SLOT = "region_slot"        # placement slots per region

    def __str__(self) -> str:
        return self.value


# Compatibility groups: at most one member may be active per VM. Two
# optimizations conflict structurally when they manage the same substrate
# (who owns spare cores, who sets the core frequency).
SPARE_COMPUTE_GROUP = frozenset(
    {
        OptimizationId.SPOT_VMS,
        OptimizationId.HARVEST_VMS,
        OptimizationId.NON_PRE_PROVISION,
    }
)
FREQUENCY_GROUP = frozenset(
    {
        OptimizationId.OVERCLOCKING,
        OptimizationId.UNDERCLOCKING,
        OptimizationId.MADC,
    }
)
COMPATIBILITY_GROUPS: tuple[frozenset[OptimizationId], ...] = (
    SPARE_COMPUTE_GROUP,
    FREQUENCY_GROUP,
)


class FrequencyLevel(enum.IntEnum):
    """Discrete core frequency steps relative to nominal."""

    THROTTLE_2 = -2
    THROTTLE_1 = -1
    NOMINAL = 0
    BOOST_1 = 1
    BOOST_2 = 2


# Work/power multiplier per frequency level.
FREQUENCY_MULTIPLIER: dict[int, float] = {
    -2: 0.6,
    -1: 0.8,
    0: 1.0,
    1: 1.15,
    2: 1.3,
}
