"""Resource arbitration between competing optimizations.

Claims against one pool are served strictly by priority class (lower
number first). Within a class the pool's nature decides the rule:

* compressible resources (frequency slots) are divided max-min, two-level
  when claims carry owners: capacity is water-filled across owners first,
  then each owner's share across its claimants;
* incompressible resources (cores, VM slots) are granted whole, earliest
  timestamp first, random tie-break from the caller's seed, skipping
  ahead past claims that no longer fit.

Integral pools round max-min shares by largest remainder, earlier
claimant first on equal remainders.
"""

from __future__ import annotations

import dataclasses
import math
import random
from collections.abc import Mapping, Sequence

from .ids import PRIORITY, OptimizationId, ResourceKind

_EPS = 1e-9


class MixedResourceKindsError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ResourcePool:
    kind: ResourceKind
    capacity: float
    compressible: bool
    integral: bool = True
    pool_id: str = ""

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValueError("pool capacity must be >= 0")


@dataclasses.dataclass(frozen=True)
class ResourceClaim:
    optimization: OptimizationId
    kind: ResourceKind
    amount: float
    timestamp_ms: int
    owner: str = ""        # workload owner; empty = claim stands alone
    claimant: str = ""     # vm id or other sub-entity label
    priority: int | None = None  # defaults to the optimization's priority

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise ValueError("claim amount must be >= 0")

    @property
    def effective_priority(self) -> int:
        if self.priority is not None:
            return self.priority
        return PRIORITY[self.optimization]


@dataclasses.dataclass(frozen=True)
class Allocation:
    """Per-claim grants aligned with the input claim order."""

    grants: tuple[float, ...]
    remaining: float

    def granted(self, index: int) -> float:
        return self.grants[index]


# ---------------------------------------------------------------------------
# Max-min fair share


def _waterfill(demands: Sequence[float], capacity: float) -> list[float]:
    """Continuous max-min allocation; Sum(out) == min(capacity, Sum(demands))."""
    n = len(demands)
    grants = [0.0] * n
    left = min(capacity, sum(demands))
    order = sorted(range(n), key=lambda i: demands[i])
    for pos, i in enumerate(order):
        share = left / (n - pos)
        if demands[i] <= share + _EPS:
            grants[i] = demands[i]
            left -= demands[i]
        else:
            for j in order[pos:]:
                grants[j] = share
            left = 0.0
            break
    return grants


def _round_largest_remainder(
    grants: Sequence[float], demands: Sequence[float], total: int
) -> list[float]:
    """Round continuous grants to integers preserving the exact total.

    Units left after flooring go to the largest fractional remainders;
    equal remainders favor the earlier claimant. A bumped claimant never
    exceeds its demand because a fractional grant is strictly below it.
    """
    floors = [math.floor(g + _EPS) for g in grants]
    leftover = total - sum(floors)
    remainders = sorted(
        range(len(grants)),
        key=lambda i: (-(grants[i] - floors[i]), i),
    )
    out = [float(f) for f in floors]
    for _ in range(2):  # second pass is a float-drift safety net
        for i in remainders:
            if leftover <= 0:
                return out
            if out[i] + 1 <= demands[i] + _EPS:
                out[i] += 1
                leftover -= 1
    return out


def fair_share(
    demands: Sequence[float], capacity: float, integral: bool = True
) -> list[float]:
    """Flat max-min division of capacity among demands."""
    if any(d < 0 for d in demands):
        raise ValueError("demands must be >= 0")
    grants = _waterfill(demands, capacity)
    if not integral:
        return grants
    total = int(min(capacity, sum(demands)) + _EPS)
    return _round_largest_remainder(grants, demands, total)


def fair_share_two_level(
    demands: Mapping[str, Mapping[str, float]],
    capacity: float,
    integral: bool = True,
) -> dict[str, dict[str, float]]:
    """Owner-level water-fill, then per-owner claimant water-fill.

    Integral rounding happens once, globally across claimants, so the
    total stays exact; an owner may end one unit off its continuous share.
    """
    owners = list(demands)
    owner_totals = [sum(demands[o].values()) for o in owners]
    owner_share = _waterfill(owner_totals, capacity)
    flat_claims: list[tuple[str, str]] = []
    flat_grants: list[float] = []
    flat_demands: list[float] = []
    for o, share in zip(owners, owner_share):
        claimants = list(demands[o])
        inner = _waterfill([demands[o][c] for c in claimants], share)
        for c, g in zip(claimants, inner):
            flat_claims.append((o, c))
            flat_grants.append(g)
            flat_demands.append(demands[o][c])
    if integral:
        total = int(min(capacity, sum(owner_totals)) + _EPS)
        flat_grants = _round_largest_remainder(flat_grants, flat_demands, total)
    out: dict[str, dict[str, float]] = {o: {} for o in owners}
    for (o, c), g in zip(flat_claims, flat_grants):
        out[o][c] = g
    return out


# ---------------------------------------------------------------------------
# resolve


def resolve(
    pool: ResourcePool, claims: Sequence[ResourceClaim], seed: int = 0
) -> Allocation:
    """Allocate one pool among claims; see module docstring for the rules."""
    for c in claims:
        if c.kind is not pool.kind:
            raise MixedResourceKindsError(
                f"claim kind {c.kind} does not match pool kind {pool.kind}"
            )
    rng = random.Random(seed)
    draws = [rng.random() for _ in claims]
    grants = [0.0] * len(claims)
    remaining = float(pool.capacity)

    by_class: dict[int, list[int]] = {}
    for i, c in enumerate(claims):
        by_class.setdefault(c.effective_priority, []).append(i)

    for prio in sorted(by_class):
        if pool.compressible:
            # Stable order: the seeded draw only breaks whole-claim ties.
            # Group by owner in first-appearance order; anonymous claims
            # stand alone so flat and two-level coincide for them.
            idxs = sorted(by_class[prio], key=lambda i: (claims[i].timestamp_ms, i))
            nested: dict[str, dict[str, float]] = {}
            members: dict[tuple[str, str], list[int]] = {}
            for i in idxs:
                c = claims[i]
                owner = c.owner or f"#claim{i}"
                claimant = c.claimant or f"#claim{i}"
                bucket = nested.setdefault(owner, {})
                bucket[claimant] = bucket.get(claimant, 0.0) + c.amount
                members.setdefault((owner, claimant), []).append(i)
            shares = fair_share_two_level(nested, remaining, pool.integral)
            for (owner, claimant), idx_list in members.items():
                # Same claimant may have filed several claims; fill them
                # in class order from the claimant's single share.
                left = shares[owner][claimant]
                for i in idx_list:
                    take = min(claims[i].amount, left)
                    grants[i] = take
                    left -= take
            remaining -= sum(sum(v.values()) for v in shares.values())
        else:
            idxs = sorted(
                by_class[prio], key=lambda i: (claims[i].timestamp_ms, draws[i], i)
            )
            for i in idxs:
                amount = claims[i].amount
                if amount <= remaining + _EPS:
                    grants[i] = amount
                    remaining -= amount
        if remaining < _EPS:
            remaining = max(remaining, 0.0)
    return Allocation(grants=tuple(grants), remaining=remaining)
