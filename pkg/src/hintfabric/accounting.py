"""Cost and carbon accounting for hint-driven optimizations.

Three related but distinct models live here:

* vm_price: exact billing for one VM's usage record. Factor-type
  optimizations multiply the regular price (spot 0.15x, capacity-shed
  0.60x, oversubscription 0.85x, on-demand-provisioning 0.98x,
  underclocking 0.99x); region placement multiplies by the region's
  price factor; harvest and overclock add structural terms (harvested
  core-hours bill at the spot core rate, overclocked core-hours pay a
  surcharge proportional to the extra frequency).

* savings_breakdown: population-scale owner-savings estimate. Each
  workload applies the best compatible subset of its eligible
  optimizations; advertised owner benefits compose multiplicatively
  and are attributed greedily in decreasing benefit order so the
  per-optimization contributions sum exactly to the total.

* estimate_joint: bounds on population savings when only partial
  knowledge of the eligibility joint distribution exists (marginals,
  pairwise fractions, a few large exact-combination masses). Solves a
  min and a max linear program over the 2^n atom masses.

At most one optimization per compatibility group may be active on a VM
(spare-compute: spot/harvest/on-demand-provisioning; frequency:
over/under-clocking and capacity shedding); selection keeps the member
with the best owner benefit.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from collections.abc import Iterable, Mapping, Sequence

import numpy as np

from . import lp
from .hints import HintSet, UtilStats, eligibility
from .ids import (
    COMPATIBILITY_GROUPS,
    FREQUENCY_GROUP,
    PRIORITY,
    SPARE_COMPUTE_GROUP,
    FrequencyLevel,
    FREQUENCY_MULTIPLIER,
    OptimizationId,
)
from .optimizers.region import RegionProfile

O = OptimizationId

# advertised average owner benefit, percent off the regular price
OWNER_BENEFIT_PCT: dict[OptimizationId, float] = {
    O.HARVEST_VMS: 91.0,
    O.SPOT_VMS: 85.0,
    O.RIGHTSIZING: 50.0,
    O.MADC: 40.0,
    O.REGION_AGNOSTIC: 22.0,
    O.AUTO_SCALING: 19.0,
    O.OVERSUBSCRIPTION: 15.0,
    O.OVERCLOCKING: 11.0,
    O.NON_PRE_PROVISION: 2.0,
    O.UNDERCLOCKING: 1.0,
}

# price-sheet multipliers for the factor-type optimizations
FACTOR_MULTIPLIER: dict[OptimizationId, float] = {
    O.SPOT_VMS: 0.15,
    O.MADC: 0.60,
    O.OVERSUBSCRIPTION: 0.85,
    O.NON_PRE_PROVISION: 0.98,
    O.UNDERCLOCKING: 0.99,
}

# core-hour reduction when the optimization shrinks the fleet itself
CARBON_CORE_HOUR_MULT: dict[OptimizationId, float] = {
    O.RIGHTSIZING: 0.50,
    O.AUTO_SCALING: 0.81,
    O.OVERSUBSCRIPTION: 0.85,
}

DEFAULT_REGIONS: tuple[RegionProfile, ...] = (
    RegionProfile("east-1", 1.00, 546.0),
    RegionProfile("east-2", 0.97, 522.0),
    RegionProfile("west-1", 1.08, 505.0),
    RegionProfile("west-2", 0.92, 478.0),
    RegionProfile("north-1", 0.88, 445.0),
    RegionProfile("north-2", 0.95, 402.0),
    RegionProfile("central-1", 1.02, 355.0),
    RegionProfile("central-2", 0.85, 310.0),
    RegionProfile("green-1", 0.78, 267.0),
    RegionProfile("south-1", 1.12, 590.0),
)
REFERENCE_REGION = "east-1"


class IncompatibleSetError(ValueError):
    def __init__(self, group: str, members: Sequence[OptimizationId]):
        self.group = group
        self.members = tuple(members)
        names = ", ".join(str(m) for m in self.members)
        super().__init__(f"{group} group admits one active member, got: {names}")


class InfeasibleError(ValueError):
    """The supplied distribution constraints contradict each other."""

    def __init__(self, certificate: Sequence[str]):
        self.certificate = tuple(certificate)
        super().__init__(
            "no joint distribution satisfies: " + "; ".join(self.certificate)
        )


class MissingIntensityError(KeyError):
    pass


# ---------------------------------------------------------------------------
# price book and per-VM pricing


@dataclasses.dataclass(frozen=True)
class PriceBook:
    base_core_hour: float = 1.0
    factors: Mapping[OptimizationId, float] = dataclasses.field(
        default_factory=lambda: dict(FACTOR_MULTIPLIER)
    )
    regions: tuple[RegionProfile, ...] = DEFAULT_REGIONS

    def __post_init__(self) -> None:
        if self.base_core_hour <= 0:
            raise ValueError("base_core_hour must be positive")
        for opt, f in self.factors.items():
            if not 0.0 < f <= 1.0:
                raise ValueError(f"factor for {opt} must be in (0, 1], got {f}")

    def region(self, region_id: str) -> RegionProfile:
        for r in self.regions:
            if r.region_id == region_id:
                return r
        raise MissingIntensityError(region_id)

    @property
    def spot_core_rate(self) -> float:
        return self.base_core_hour * self.factors[O.SPOT_VMS]


DEFAULT_PRICE_BOOK = PriceBook()


@dataclasses.dataclass(frozen=True)
class VmUsage:
    cores: int
    vm_hours: float = 1.0
    region_id: str = REFERENCE_REGION
    harvested_core_hours: float = 0.0
    overclocked_core_hours: float = 0.0
    overclock_level: FrequencyLevel = FrequencyLevel.BOOST_1

    def __post_init__(self) -> None:
        if self.cores <= 0 or self.vm_hours < 0:
            raise ValueError("cores must be > 0 and vm_hours >= 0")
        if self.harvested_core_hours < 0 or self.overclocked_core_hours < 0:
            raise ValueError("core-hour terms must be >= 0")


_GROUP_NAMES = {
    SPARE_COMPUTE_GROUP: "spare-compute",
    FREQUENCY_GROUP: "frequency",
}


def check_compatible(active: Iterable[OptimizationId]) -> None:
    active = set(active)
    for group in COMPATIBILITY_GROUPS:
        hit = sorted(active & group, key=lambda o: PRIORITY[o])
        if len(hit) > 1:
            raise IncompatibleSetError(_GROUP_NAMES.get(group, "compatibility"), hit)


def vm_price(
    usage: VmUsage,
    active: Iterable[OptimizationId],
    book: PriceBook = DEFAULT_PRICE_BOOK,
) -> float:
    active = frozenset(active)
    check_compatible(active)
    cost = book.base_core_hour * usage.cores * usage.vm_hours
    for opt in sorted(active, key=lambda o: PRIORITY[o]):
        if opt in book.factors:
            cost *= book.factors[opt]
    if O.HARVEST_VMS in active:
        # harvest bills like spot for the base VM plus harvested cores
        cost *= book.factors[O.SPOT_VMS]
        cost += usage.harvested_core_hours * book.spot_core_rate
    cost *= book.region(usage.region_id).price_factor
    if O.OVERCLOCKING in active:
        surcharge = FREQUENCY_MULTIPLIER[int(usage.overclock_level)] - 1.0
        cost += usage.overclocked_core_hours * book.base_core_hour * surcharge
    return cost


# ---------------------------------------------------------------------------
# population savings


@dataclasses.dataclass(frozen=True)
class WorkloadProfile:
    workload_id: str
    cores: int
    hints: HintSet
    util: UtilStats = dataclasses.field(default_factory=UtilStats)
    region_id: str = REFERENCE_REGION

    def __post_init__(self) -> None:
        if self.cores <= 0:
            raise ValueError("cores must be positive")


def applied_set(
    eligible: Iterable[OptimizationId],
    benefits: Mapping[OptimizationId, float] = OWNER_BENEFIT_PCT,
) -> frozenset[OptimizationId]:
    """Best compatible subset: per group keep the highest-benefit member
    (ties to the smaller priority number); everything ungrouped passes."""
    eligible = set(eligible)
    out = set(eligible)
    for group in COMPATIBILITY_GROUPS:
        hit = eligible & group
        if len(hit) > 1:
            winner = max(hit, key=lambda o: (benefits.get(o, 0.0), -PRIORITY[o]))
            out -= hit - {winner}
    return frozenset(out)


def _cost_fraction(
    applied: Iterable[OptimizationId],
    benefits: Mapping[OptimizationId, float],
) -> float:
    frac = 1.0
    for opt in applied:
        frac *= 1.0 - benefits.get(opt, 0.0) / 100.0
    return frac


def _attribution_order(
    applied: Iterable[OptimizationId],
    benefits: Mapping[OptimizationId, float],
) -> list[OptimizationId]:
    return sorted(applied, key=lambda o: (-benefits.get(o, 0.0), PRIORITY[o]))


@dataclasses.dataclass(frozen=True)
class SavingsReport:
    total_savings_pct: float
    contributions_pp: dict[OptimizationId, float]
    attribution_order: tuple[OptimizationId, ...]
    regular_cost: float
    discounted_cost: float


def savings_breakdown(
    population: Iterable[WorkloadProfile],
    benefits: Mapping[OptimizationId, float] = OWNER_BENEFIT_PCT,
) -> SavingsReport:
    regular = 0.0
    discounted = 0.0
    saved_by: dict[OptimizationId, float] = {}
    for wl in population:
        weight = float(wl.cores)
        regular += weight
        applied = applied_set(eligibility(wl.hints, wl.util), benefits)
        running = 1.0
        for opt in _attribution_order(applied, benefits):
            after = running * (1.0 - benefits.get(opt, 0.0) / 100.0)
            saved_by[opt] = saved_by.get(opt, 0.0) + (running - after) * weight
            running = after
        discounted += running * weight
    if regular == 0.0:
        return SavingsReport(0.0, {}, (), 0.0, 0.0)
    contributions = {
        opt: 100.0 * saved / regular
        for opt, saved in sorted(saved_by.items(), key=lambda kv: -kv[1])
    }
    order = tuple(contributions)
    total = 100.0 * (1.0 - discounted / regular)
    return SavingsReport(total, contributions, order, regular, discounted)


# ---------------------------------------------------------------------------
# joint-distribution LP


@dataclasses.dataclass(frozen=True)
class JointEstimate:
    opts: tuple[OptimizationId, ...]
    min_savings_pct: float
    max_savings_pct: float
    independence_savings_pct: float
    joint: np.ndarray  # one feasible distribution (from the min solve)
    atom_savings_pct: np.ndarray


def _atom_savings(
    opts: Sequence[OptimizationId],
    benefits: Mapping[OptimizationId, float],
) -> np.ndarray:
    n = len(opts)
    out = np.zeros(1 << n)
    for mask in range(1 << n):
        members = {opts[i] for i in range(n) if mask >> i & 1}
        applied = applied_set(members, benefits)
        out[mask] = 100.0 * (1.0 - _cost_fraction(applied, benefits))
    return out


def estimate_joint(
    marginals: Mapping[OptimizationId, float],
    pairwise: Mapping[tuple[OptimizationId, OptimizationId], float] | None = None,
    scenarios: Mapping[frozenset[OptimizationId], float] | None = None,
    benefits: Mapping[OptimizationId, float] = OWNER_BENEFIT_PCT,
    tol: float = lp.DEFAULT_TOL,
) -> JointEstimate:
    """Bound total savings over every joint consistent with the inputs.

    marginals: per-optimization eligible fraction (required, defines the
    universe); pairwise: fraction eligible for both of a pair; scenarios:
    exact probability of a specific full combination (used for the rare
    many-optimization masses large enough to pin down, > 5% or so).
    """
    pairwise = dict(pairwise or {})
    scenarios = {frozenset(k): v for k, v in (scenarios or {}).items()}
    opts: list[OptimizationId] = sorted(marginals, key=str)
    index = {o: i for i, o in enumerate(opts)}
    for value in itertools.chain(marginals.values(), pairwise.values(), scenarios.values()):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"fractions must be within [0, 1], got {value}")
    for pair in pairwise:
        if len(set(pair)) != 2 or any(o not in index for o in pair):
            raise ValueError(f"pairwise key {pair} is not a pair of known optimizations")
    for combo in scenarios:
        if any(o not in index for o in combo):
            raise ValueError(f"scenario {set(combo)} mentions unknown optimizations")

    n = len(opts)
    n_atoms = 1 << n
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    labels: list[str] = []

    atom_masks = np.arange(n_atoms)

    rows.append(np.ones(n_atoms))
    rhs.append(1.0)
    labels.append("total probability = 1")

    for opt in opts:
        bit = 1 << index[opt]
        rows.append(((atom_masks & bit) != 0).astype(float))
        rhs.append(float(marginals[opt]))
        labels.append(f"marginal[{opt}] = {marginals[opt]}")
    for (a_opt, b_opt), value in sorted(pairwise.items(), key=lambda kv: str(kv[0])):
        bits = (1 << index[a_opt]) | (1 << index[b_opt])
        rows.append(((atom_masks & bits) == bits).astype(float))
        rhs.append(float(value))
        labels.append(f"pairwise[{a_opt}, {b_opt}] = {value}")
    for combo, value in sorted(scenarios.items(), key=lambda kv: str(sorted(map(str, kv[0])))):
        mask = sum(1 << index[o] for o in combo)
        row = np.zeros(n_atoms)
        row[mask] = 1.0
        rows.append(row)
        rhs.append(float(value))
        labels.append(f"scenario[{'+'.join(sorted(map(str, combo)))}] = {value}")

    a = np.vstack(rows)
    b = np.asarray(rhs)
    savings = _atom_savings(opts, benefits)

    low = lp.solve_equalities(a, b, savings, maximize=False, tol=tol)
    if low.status == "infeasible":
        cert = [labels[i] for i in low.infeasible_rows] or labels
        raise InfeasibleError(cert)
    if not low.ok:
        raise lp.LpError(f"lower bound solve failed: {low.status}")
    high = lp.solve_equalities(a, b, savings, maximize=True, tol=tol)
    if not high.ok:
        raise lp.LpError(f"upper bound solve failed: {high.status}")

    for result in (low, high):
        residual = np.max(np.abs(a @ result.x - b))
        if residual > 1e-9:
            raise lp.LpError(f"solution violates constraints by {residual}")

    # independence reference point from the marginals alone
    probs = np.ones(n_atoms)
    for opt in opts:
        bit = 1 << index[opt]
        m = float(marginals[opt])
        hit = (atom_masks & bit) != 0
        probs = np.where(hit, probs * m, probs * (1.0 - m))
    independence = float(probs @ savings)

    return JointEstimate(
        opts=tuple(opts),
        min_savings_pct=float(low.objective),
        max_savings_pct=float(high.objective),
        independence_savings_pct=independence,
        joint=low.x,
        atom_savings_pct=savings,
    )


def population_marginals(
    population: Iterable[WorkloadProfile],
) -> dict[OptimizationId, float]:
    """Core-weighted eligibility marginals, ready for estimate_joint."""
    weight = 0.0
    hits: dict[OptimizationId, float] = {o: 0.0 for o in OWNER_BENEFIT_PCT}
    for wl in population:
        weight += wl.cores
        for opt in eligibility(wl.hints, wl.util):
            hits[opt] += wl.cores
    if weight == 0.0:
        return {o: 0.0 for o in hits}
    return {o: v / weight for o, v in hits.items()}


# ---------------------------------------------------------------------------
# carbon


@dataclasses.dataclass(frozen=True)
class CarbonReport:
    total_base_g: float
    total_optimized_g: float
    reduction_pct: float
    migration_reduction_pct: float  # per migrated core, home vs target region
    target_region_id: str
    by_optimization_pp: dict[OptimizationId, float]


def _intensity_percentile(regions: Sequence[RegionProfile], pct: float) -> RegionProfile:
    ordered = sorted(regions, key=lambda r: (r.carbon_gco2_per_kwh, r.region_id))
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def carbon_report(
    population: Iterable[WorkloadProfile],
    regions: Sequence[RegionProfile] = DEFAULT_REGIONS,
    migrate_percentile: float = 10.0,
    benefits: Mapping[OptimizationId, float] = OWNER_BENEFIT_PCT,
) -> CarbonReport:
    """Steady-state carbon: core-hours x region intensity, with migration
    for region-independent workloads and core-hour cuts from the
    fleet-shrinking optimizations."""
    if not regions:
        raise MissingIntensityError("empty region table")
    by_id = {r.region_id: r for r in regions}
    target = _intensity_percentile(regions, migrate_percentile)

    base_total = 0.0
    opt_total = 0.0
    saved_by: dict[OptimizationId, float] = {}
    migration_ratios: list[float] = []
    for wl in population:
        if wl.region_id not in by_id:
            raise MissingIntensityError(wl.region_id)
        home = by_id[wl.region_id]
        base = wl.cores * home.carbon_gco2_per_kwh
        base_total += base
        applied = applied_set(eligibility(wl.hints, wl.util), benefits)

        ratios: dict[OptimizationId, float] = {}
        if O.REGION_AGNOSTIC in applied and home.carbon_gco2_per_kwh > 0:
            ratios[O.REGION_AGNOSTIC] = (
                target.carbon_gco2_per_kwh / home.carbon_gco2_per_kwh
            )
            migration_ratios.append(ratios[O.REGION_AGNOSTIC])
        for opt, mult in CARBON_CORE_HOUR_MULT.items():
            if opt in applied:
                ratios[opt] = mult

        running = base
        for opt in _attribution_order(ratios, benefits):
            after = running * ratios[opt]
            saved_by[opt] = saved_by.get(opt, 0.0) + (running - after)
            running = after
        opt_total += running

    if base_total == 0.0:
        return CarbonReport(0.0, 0.0, 0.0, 0.0, target.region_id, {})
    migration_pct = (
        100.0 * (1.0 - sum(migration_ratios) / len(migration_ratios))
        if migration_ratios
        else 0.0
    )
    breakdown = {
        opt: 100.0 * saved / base_total
        for opt, saved in sorted(saved_by.items(), key=lambda kv: -kv[1])
    }
    return CarbonReport(
        total_base_g=base_total,
        total_optimized_g=opt_total,
        reduction_pct=100.0 * (1.0 - opt_total / base_total),
        migration_reduction_pct=migration_pct,
        target_region_id=target.region_id,
        by_optimization_pp=breakdown,
    )
