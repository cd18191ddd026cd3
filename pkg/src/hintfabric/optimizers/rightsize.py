"""Rightsizing recommendations from utilization history.

Over a full observation window (24 h by default):

* upsize (double cores) when any sample saturates: some resource peak
  at or above the high bar;
* downsize (halve cores, floor 1) only when every sample keeps every
  resource peak under the low bar.

Saturation wins if both somehow hold. A recommendation is auto-applied
without operator sign-off only for workloads that already declared
themselves disruption-tolerant (preemptible enough and <= 3 nines);
everyone else gets an advisory.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Sequence

from ..hints import EffectiveHints, HintSet, UtilStats

WINDOW_MS = 86_400_000
LOW_BAR_PCT = 50.0
HIGH_BAR_PCT = 90.0
AUTO_APPLY_MIN_PREEMPTIBILITY = 20
AUTO_APPLY_MAX_NINES = 3


class InsufficientHistoryError(ValueError):
    """History does not yet span the observation window."""


@dataclasses.dataclass(frozen=True)
class ResizeAdvice:
    vm_id: str
    current_cores: int
    target_cores: int
    reason: str  # "downsize" | "upsize"


def recommend(
    vm_id: str,
    current_cores: int,
    samples: Sequence[tuple[int, UtilStats]],
    window_ms: int = WINDOW_MS,
    low_bar_pct: float = LOW_BAR_PCT,
    high_bar_pct: float = HIGH_BAR_PCT,
) -> ResizeAdvice | None:
    """samples: (timestamp_ms, stats) pairs; returns None when sized right."""
    if current_cores <= 0:
        raise ValueError("current_cores must be positive")
    if not samples:
        raise InsufficientHistoryError(f"{vm_id}: no samples")
    times = [t for t, _ in samples]
    span = max(times) - min(times)
    if span < window_ms:
        raise InsufficientHistoryError(
            f"{vm_id}: history spans {span} ms, need {window_ms} ms"
        )
    if any(stats.peak_any_at_least(high_bar_pct) for _, stats in samples):
        return ResizeAdvice(vm_id, current_cores, current_cores * 2, "upsize")
    if all(stats.peak_all_below(low_bar_pct) for _, stats in samples):
        target = max(1, current_cores // 2)
        if target == current_cores:
            return None
        return ResizeAdvice(vm_id, current_cores, target, "downsize")
    return None


def auto_apply(hints: HintSet | EffectiveHints) -> bool:
    base = hints.effective_set() if isinstance(hints, EffectiveHints) else hints
    return (
        base.preemptibility_pct >= AUTO_APPLY_MIN_PREEMPTIBILITY
        and base.availability_nines <= AUTO_APPLY_MAX_NINES
    )
