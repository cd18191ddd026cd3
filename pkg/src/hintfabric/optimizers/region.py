"""Region-agnostic placement.

Region-independent workloads are placed by a weighted score over price
and carbon intensity, each normalized by the maximum across the
candidate set so the two axes are comparable:

    score = w * price/max_price + (1 - w) * carbon/max_carbon

Lowest score wins; ties fall back to region_id lexicographically so the
choice is stable run to run.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable


@dataclasses.dataclass(frozen=True)
class RegionProfile:
    region_id: str
    price_factor: float          # relative on-demand price, 1.0 = reference
    carbon_gco2_per_kwh: float   # grid intensity

    def __post_init__(self) -> None:
        if self.price_factor <= 0 or self.carbon_gco2_per_kwh < 0:
            raise ValueError("price must be > 0 and carbon >= 0")


def score(region: RegionProfile, max_price: float, max_carbon: float, weight_price: float) -> float:
    price_term = region.price_factor / max_price if max_price > 0 else 0.0
    carbon_term = region.carbon_gco2_per_kwh / max_carbon if max_carbon > 0 else 0.0
    return weight_price * price_term + (1.0 - weight_price) * carbon_term


def place(regions: Iterable[RegionProfile], weight_price: float = 0.5) -> RegionProfile:
    regions = list(regions)
    if not regions:
        raise ValueError("no candidate regions")
    if not 0.0 <= weight_price <= 1.0:
        raise ValueError("weight_price must be in [0, 1]")
    max_price = max(r.price_factor for r in regions)
    max_carbon = max(r.carbon_gco2_per_kwh for r in regions)
    return min(
        regions,
        key=lambda r: (score(r, max_price, max_carbon, weight_price), r.region_id),
    )
