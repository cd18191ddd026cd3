"""Workload hint model.

A workload describes itself with a seven-field HintSet at deployment time
and may tighten or relax individual fields at runtime through RuntimeHint
updates. The platform answers with PlatformNotifications. Everything else
in the system (eligibility, pricing, arbitration) is derived from these
three types, so their semantics are pinned down here:

* defaults are conservative: a workload that says nothing is treated as
  fragile (five nines, nothing preemptible, no delay tolerance) and is
  eligible for zero optimizations;
* runtime updates are last-writer-wins per (vm, kind);
* flapping updates are suppressed by consistency_check before they reach
  the fabric.
"""

from __future__ import annotations

import dataclasses
import enum
from collections.abc import Iterable, Mapping, Sequence
from typing import Any

from .ids import OptimizationId

# ---------------------------------------------------------------------------
# Field vocabulary


class HintKind(str, enum.Enum):
    """Keys a RuntimeHint may carry.

    The first seven mirror the HintSet fields; the last two are
    runtime-only priority overrides.
    """

    SCALE_UP_DOWN = "scale_up_down"
    SCALE_OUT_IN = "scale_out_in"
    DEPLOY_TIME_MS = "deploy_time_ms"
    AVAILABILITY_NINES = "availability_nines"
    PREEMPTIBILITY_PCT = "preemptibility_pct"
    DELAY_TOLERANCE_MS = "delay_tolerance_ms"
    REGION_INDEPENDENT = "region_independent"
    PREEMPTION_PRIORITY = "preemption_priority"
    SCALE_PREFERENCE = "scale_preference"

    def __str__(self) -> str:
        return self.value


FIELD_KINDS = (
    HintKind.SCALE_UP_DOWN,
    HintKind.SCALE_OUT_IN,
    HintKind.DEPLOY_TIME_MS,
    HintKind.AVAILABILITY_NINES,
    HintKind.PREEMPTIBILITY_PCT,
    HintKind.DELAY_TOLERANCE_MS,
    HintKind.REGION_INDEPENDENT,
)


class PreemptionPriority(str, enum.Enum):
    """Per-VM eviction preference; Low is evicted first, High last."""

    LOW = "low"
    NORMAL = "normal"
    HIGH = "high"

    def __str__(self) -> str:
        return self.value

    @property
    def rank(self) -> int:
        return {"low": 0, "normal": 1, "high": 2}[self.value]


class ScalePreference(str, enum.Enum):
    PREFER_GROW = "prefer_grow"
    NEUTRAL = "neutral"
    PREFER_SHRINK = "prefer_shrink"

    def __str__(self) -> str:
        return self.value


class HintSource(str, enum.Enum):
    IN_VM = "in_vm"
    WORKLOAD_CONTROLLER = "workload_controller"

    def __str__(self) -> str:
        return self.value


class NotificationKind(str, enum.Enum):
    EVICTION = "eviction"
    PREEMPTION = "preemption"
    SCALE_UP = "scale_up"
    SCALE_DOWN = "scale_down"
    FREQUENCY_CHANGE = "frequency_change"
    MAINTENANCE = "maintenance"

    def __str__(self) -> str:
        return self.value


class HintValidationError(ValueError):
    """Raised with the full list of offending fields; nothing is applied."""

    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


# ---------------------------------------------------------------------------
# Deployment hints

_BOOL_FIELDS = {"scale_up_down", "scale_out_in", "region_independent"}
_MS_FIELDS = {"deploy_time_ms", "delay_tolerance_ms"}


@dataclasses.dataclass(frozen=True)
class HintSet:
    """Deployment-time self-description of a workload.

    Defaults are the conservative fallback: the platform treats an
    undescribed workload as strict on every axis.
    """

    scale_up_down: bool = False
    scale_out_in: bool = False
    deploy_time_ms: int = 0
    availability_nines: int = 5
    preemptibility_pct: int = 0
    delay_tolerance_ms: int = 0
    region_independent: bool = False

    def __post_init__(self) -> None:
        errors = _field_errors(dataclasses.asdict(self))
        if errors:
            raise HintValidationError(errors)

    def replace(self, **kw: Any) -> "HintSet":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    # Flat one-field-per-line text form ("field = value").
    def to_kv(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "HintSet":
        data: dict[str, Any] = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise HintValidationError([(f"line {ln}", "expected 'field = value'")])
            key, _, val = line.partition("=")
            data[key.strip()] = val.strip()
        return validate(data)


def conservative_hints() -> HintSet:
    """The defaults applied when a workload supplies nothing."""
    return HintSet()


def _field_errors(data: Mapping[str, Any]) -> list[tuple[str, str]]:
    errors: list[tuple[str, str]] = []
    names = {f.name for f in dataclasses.fields(HintSet)}
    for key in data:
        if key not in names:
            errors.append((key, "unknown field"))
    for name in sorted(names & set(data)):
        ok, msg = _check_field(name, data[name])
        if not ok:
            errors.append((name, msg))
    return errors


def _check_field(name: str, value: Any) -> tuple[bool, str]:
    if name in _BOOL_FIELDS:
        if isinstance(value, bool):
            return True, ""
        return False, "expected true/false"
    # integer fields; bool is an int subclass, reject it explicitly
    if isinstance(value, bool) or not isinstance(value, int):
        return False, "expected an integer"
    if name in _MS_FIELDS and value < 0:
        return False, "must be >= 0 ms"
    if name == "availability_nines" and not 0 <= value <= 5:
        return False, "must be in 0..5"
    if name == "preemptibility_pct" and not 0 <= value <= 100:
        return False, "must be in 0..100"
    return True, ""


def _coerce(name: str, value: Any) -> Any:
    """Parse string inputs from text documents; pass through typed values."""
    if not isinstance(value, str):
        return value
    text = value.strip()
    if name in _BOOL_FIELDS:
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        return text  # left as-is; _check_field reports it
    try:
        return int(text)
    except ValueError:
        return text


def validate(partial: Mapping[str, Any] | None) -> HintSet:
    """Fill missing fields with conservative defaults, reject bad ones.

    Validation is all-or-nothing: any offending field makes the whole
    update fail, and the error lists every offending field with its
    allowed range.
    """
    if not partial:
        return HintSet()
    data = {k: _coerce(k, v) for k, v in partial.items()}
    errors = _field_errors(data)
    if errors:
        raise HintValidationError(errors)
    base = HintSet().as_dict()
    base.update(data)
    return HintSet(**base)


# ---------------------------------------------------------------------------
# Runtime traffic


_KIND_VALUE_CHECK: dict[HintKind, Any] = {
    HintKind.PREEMPTION_PRIORITY: PreemptionPriority,
    HintKind.SCALE_PREFERENCE: ScalePreference,
}


@dataclasses.dataclass(frozen=True)
class RuntimeHint:
    """A single runtime update for one VM and one hint kind."""

    vm_id: str
    kind: HintKind
    value: Any
    timestamp_ms: int
    source: HintSource = HintSource.IN_VM

    def __post_init__(self) -> None:
        if self.timestamp_ms < 0:
            raise HintValidationError([("timestamp_ms", "must be >= 0")])
        kind = self.kind
        enum_type = _KIND_VALUE_CHECK.get(kind)
        if enum_type is not None:
            if not isinstance(self.value, enum_type):
                raise HintValidationError([(str(kind), f"expected {enum_type.__name__}")])
            return
        ok, msg = _check_field(kind.value, self.value)
        if not ok:
            raise HintValidationError([(str(kind), msg)])


@dataclasses.dataclass(frozen=True)
class PlatformNotification:
    """Platform-to-workload message delivered into the VM mailbox.

    For evictions and preemptions effective_at_ms - issued_at_ms is the
    advance notice; non-emergency notices must give at least the
    configured notice period (30 s by default).
    """

    kind: NotificationKind
    vm_id: str
    issued_at_ms: int
    effective_at_ms: int
    payload: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    emergency: bool = False
    optimization: OptimizationId | None = None

    def __post_init__(self) -> None:
        if self.effective_at_ms < self.issued_at_ms:
            raise HintValidationError(
                [("effective_at_ms", "must be >= issued_at_ms")]
            )

    @property
    def notice_ms(self) -> int:
        return self.effective_at_ms - self.issued_at_ms


@dataclasses.dataclass(frozen=True)
class HintRejection:
    """Workload-facing note that a runtime hint was Ignored (flapping)."""

    vm_id: str
    kind: HintKind
    reason: str
    at_ms: int


# ---------------------------------------------------------------------------
# Effective view: deployment base + runtime overrides


@dataclasses.dataclass(frozen=True)
class EffectiveHints:
    """What the platform currently believes about one VM.

    stamps records the timestamp of the winning update per kind so that
    last-writer-wins holds across merge batches, not only within one.
    """

    base: HintSet
    overrides: Mapping[HintKind, Any] = dataclasses.field(default_factory=dict)
    stamps: Mapping[HintKind, int] = dataclasses.field(default_factory=dict)
    preemption_priority: PreemptionPriority = PreemptionPriority.NORMAL
    scale_preference: ScalePreference = ScalePreference.NEUTRAL

    def field(self, kind: HintKind) -> Any:
        if kind in self.overrides:
            return self.overrides[kind]
        return getattr(self.base, kind.value)

    def effective_set(self) -> HintSet:
        data = self.base.as_dict()
        for kind, value in self.overrides.items():
            if kind in FIELD_KINDS:
                data[kind.value] = value
        return HintSet(**data)


def merge(current: EffectiveHints, updates: Iterable[RuntimeHint]) -> EffectiveHints:
    """Apply accepted runtime updates, last writer (by timestamp) wins.

    An update only loses to one with a strictly newer timestamp; on equal
    timestamps the later arrival in the batch wins. Merging an
    already-applied batch again is a no-op.
    """
    overrides = dict(current.overrides)
    stamps = dict(current.stamps)
    priority = current.preemption_priority
    scale_pref = current.scale_preference
    for hint in updates:
        if hint.timestamp_ms < stamps.get(hint.kind, -1):
            continue
        stamps[hint.kind] = hint.timestamp_ms
        if hint.kind is HintKind.PREEMPTION_PRIORITY:
            priority = hint.value
        elif hint.kind is HintKind.SCALE_PREFERENCE:
            scale_pref = hint.value
        else:
            overrides[hint.kind] = hint.value
    return EffectiveHints(
        base=current.base,
        overrides=overrides,
        stamps=stamps,
        preemption_priority=priority,
        scale_preference=scale_pref,
    )


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    IGNORE = "ignore"

    def __str__(self) -> str:
        return self.value


def consistency_check(
    history: Sequence[RuntimeHint],
    candidate: RuntimeHint,
    flap_limit: int = 4,
    window_ms: int = 60_000,
) -> Decision:
    """Flap detector for one (vm, kind) stream.

    A flip is a value change relative to the previously accepted update.
    The candidate is Ignored when it would be a flip and the accepted
    history already contains flap_limit flips inside the trailing window,
    i.e. the (flap_limit+1)-th flip inside the window is suppressed. The
    first update of a stream is never Ignored.
    """
    if not history:
        return Decision.ACCEPT
    if candidate.value == history[-1].value:
        return Decision.ACCEPT
    cutoff = candidate.timestamp_ms - window_ms
    flips = 0
    for prev, cur in zip(history, history[1:]):
        if cur.value != prev.value and cur.timestamp_ms > cutoff:
            flips += 1
    return Decision.IGNORE if flips >= flap_limit else Decision.ACCEPT


# ---------------------------------------------------------------------------
# Utilization statistics and optimization eligibility


@dataclasses.dataclass(frozen=True)
class UtilStats:
    """Observed utilization of a workload, percentages in 0..100.

    p95_cpu_pct is the 95th percentile of average CPU utilization;
    p95_max_cpu_pct the 95th percentile of max CPU utilization;
    peak_pct holds the maximum observed utilization per resource.
    """

    p95_cpu_pct: float = 100.0
    p95_max_cpu_pct: float = 100.0
    peak_pct: Mapping[str, float] = dataclasses.field(
        default_factory=lambda: {"cpu": 100.0, "memory": 100.0, "disk": 100.0}
    )

    def peak_all_below(self, pct: float) -> bool:
        return all(v < pct for v in self.peak_pct.values())

    def peak_any_at_least(self, pct: float) -> bool:
        return any(v >= pct for v in self.peak_pct.values())


@dataclasses.dataclass(frozen=True)
class EligibilityConfig:
    """Thresholds used by the eligibility rules."""

    relaxed_availability_nines: int = 3
    non_strict_deploy_ms: int = 60_000
    spot_min_preemptibility_pct: int = 20
    overclock_min_p95_max_cpu: float = 40.0
    oversub_max_p95_cpu: float = 65.0
    rightsize_low_pct: float = 50.0
    rightsize_high_pct: float = 90.0


DEFAULT_ELIGIBILITY = EligibilityConfig()


def eligibility(
    hints: HintSet | EffectiveHints,
    util: UtilStats | None = None,
    config: EligibilityConfig = DEFAULT_ELIGIBILITY,
) -> frozenset[OptimizationId]:
    """Which optimizations a workload qualifies for.

    Purely characteristic-driven; whether an optimization is actually
    applied is a separate decision (compatibility groups, arbitration).
    Every rule is monotone: relaxing a field never removes eligibility.
    """
    h = hints.effective_set() if isinstance(hints, EffectiveHints) else hints
    u = util if util is not None else UtilStats()
    out: set[OptimizationId] = set()

    relaxed_avail = h.availability_nines <= config.relaxed_availability_nines
    delay_tolerant = h.delay_tolerance_ms > 0
    spot_ok = h.preemptibility_pct >= config.spot_min_preemptibility_pct

    if h.scale_out_in and delay_tolerant:
        out.add(OptimizationId.AUTO_SCALING)
    if spot_ok:
        out.add(OptimizationId.SPOT_VMS)
    if spot_ok and h.scale_up_down and delay_tolerant:
        out.add(OptimizationId.HARVEST_VMS)
    if delay_tolerant and u.p95_max_cpu_pct > config.overclock_min_p95_max_cpu:
        out.add(OptimizationId.OVERCLOCKING)
    if relaxed_avail and delay_tolerant:
        out.add(OptimizationId.UNDERCLOCKING)
    if h.deploy_time_ms >= config.non_strict_deploy_ms:
        out.add(OptimizationId.NON_PRE_PROVISION)
    if h.region_independent:
        out.add(OptimizationId.REGION_AGNOSTIC)
    if delay_tolerant and u.p95_cpu_pct < config.oversub_max_p95_cpu:
        out.add(OptimizationId.OVERSUBSCRIPTION)
    if relaxed_avail and (
        u.peak_all_below(config.rightsize_low_pct)
        or u.peak_any_at_least(config.rightsize_high_pct)
    ):
        out.add(OptimizationId.RIGHTSIZING)
    if relaxed_avail:
        out.add(OptimizationId.MADC)
    return frozenset(out)
