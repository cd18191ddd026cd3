"""Scenario schema: regions, servers, workloads, scripted events.

A scenario is a plain mapping (normally loaded from a YAML file, see
``load_scenario``) validated into frozen dataclasses. Validation is
all-or-nothing and reports every offending field with its path, e.g.
``servers[1].cores``.

Scripted events keep runs exact: capacity crunches (spot demand) and
power caps (capacity shedding) happen at fixed times instead of being
drawn from a distribution.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping, Sequence
from typing import Any

import yaml

from ..hints import HintSet, HintValidationError, validate as validate_hints
from ..ids import OptimizationId
from ..optimizers.autoscale import ScalePolicy
from ..optimizers.region import RegionProfile

# Optimizations the engine has a behavior pass for. The others only make
# sense in the accounting models and are rejected here rather than being
# silently priced without simulated effects.
SIMULATED_OPTIMIZATIONS = frozenset(
    {
        OptimizationId.SPOT_VMS,
        OptimizationId.MADC,
        OptimizationId.AUTO_SCALING,
        OptimizationId.UNDERCLOCKING,
        OptimizationId.RIGHTSIZING,
    }
)

MODEL_NAMES = ("batch_analytics", "microservices", "video_conference")

EVENT_KINDS = ("capacity_crunch", "power_cap")


class ScenarioValidationError(ValueError):
    """Carries (field path, problem) pairs for every bad field."""

    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        detail = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(f"invalid scenario: {detail}")


@dataclasses.dataclass(frozen=True)
class ServerSpec:
    server_id: str
    region_id: str
    cores: int
    power_budget_slots: float


@dataclasses.dataclass(frozen=True)
class ScriptedEvent:
    at_ms: int
    kind: str
    params: Mapping[str, Any] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class WorkloadSpec:
    workload_id: str
    model: str
    vms: int
    cores_per_vm: int
    region_id: str
    hints: HintSet
    params: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    autoscale: ScalePolicy | None = None


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_ms: int
    tick_ms: int
    regions: tuple[RegionProfile, ...]
    servers: tuple[ServerSpec, ...]
    workloads: tuple[WorkloadSpec, ...]
    enabled: frozenset[OptimizationId] = frozenset()
    events: tuple[ScriptedEvent, ...] = ()
    use_runtime_hints: bool = True
    notice_ms: int = 30_000
    rightsize_window_ms: int = 86_400_000
    rightsize_check_ms: int = 3_600_000
    broker_events_per_second: float = 200.0


# ---------------------------------------------------------------------------
# Placement

def plan_placement(
    servers: Sequence[ServerSpec],
    workloads: Sequence[WorkloadSpec],
) -> dict[str, str]:
    """Initial VM -> server assignment, or raises on insufficient capacity.

    Anti-affinity: each workload's VMs spread across the least-loaded
    servers of its home region, preferring servers that hold fewer of
    the same workload's VMs.
    """
    used: dict[str, int] = {s.server_id: 0 for s in servers}
    per_wl: dict[tuple[str, str], int] = {}
    by_region: dict[str, list[ServerSpec]] = {}
    for s in sorted(servers, key=lambda s: s.server_id):
        by_region.setdefault(s.region_id, []).append(s)
    out: dict[str, str] = {}
    errors: list[tuple[str, str]] = []
    for wi, wl in enumerate(workloads):
        for i in range(wl.vms):
            options = [
                s
                for s in by_region.get(wl.region_id, [])
                if used[s.server_id] + wl.cores_per_vm <= s.cores
            ]
            if not options:
                errors.append(
                    (
                        f"workloads[{wi}]",
                        f"no server in {wl.region_id!r} has "
                        f"{wl.cores_per_vm} free cores for vm {i}",
                    )
                )
                break
            best = min(
                options,
                key=lambda s: (
                    per_wl.get((wl.workload_id, s.server_id), 0),
                    used[s.server_id],
                    s.server_id,
                ),
            )
            out[f"{wl.workload_id}-{i:03d}"] = best.server_id
            used[best.server_id] += wl.cores_per_vm
            per_wl[(wl.workload_id, best.server_id)] = (
                per_wl.get((wl.workload_id, best.server_id), 0) + 1
            )
    if errors:
        raise ScenarioValidationError(errors)
    return out


# ---------------------------------------------------------------------------
# Document parsing

_TOP_KEYS = {
    "name", "seed", "duration_ms", "tick_ms", "regions", "servers",
    "workloads", "enabled", "events", "use_runtime_hints", "notice_ms",
    "rightsize_window_ms", "rightsize_check_ms", "broker_events_per_second",
}


def _want(obj: Any, path: str, typ: type, errors: list, default: Any = None) -> Any:
    if obj is None:
        return default
    if typ is float and isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    if typ is int and isinstance(obj, bool):
        errors.append((path, "expected an integer"))
        return default
    if not isinstance(obj, typ):
        errors.append((path, f"expected {typ.__name__}"))
        return default
    return obj


def _parse_region(obj: Any, path: str, errors: list) -> RegionProfile | None:
    if not isinstance(obj, Mapping):
        errors.append((path, "expected a mapping"))
        return None
    rid = _want(obj.get("region_id"), f"{path}.region_id", str, errors)
    price = _want(obj.get("price_factor", 1.0), f"{path}.price_factor", float, errors)
    carbon = _want(
        obj.get("carbon_gco2_per_kwh", 0.0), f"{path}.carbon_gco2_per_kwh",
        float, errors,
    )
    if rid is None or price is None or carbon is None:
        return None
    try:
        return RegionProfile(rid, price, carbon)
    except ValueError as exc:
        errors.append((path, str(exc)))
        return None


def _parse_server(obj: Any, path: str, errors: list) -> ServerSpec | None:
    if not isinstance(obj, Mapping):
        errors.append((path, "expected a mapping"))
        return None
    sid = _want(obj.get("server_id"), f"{path}.server_id", str, errors)
    rid = _want(obj.get("region_id"), f"{path}.region_id", str, errors)
    cores = _want(obj.get("cores"), f"{path}.cores", int, errors)
    slots = _want(
        obj.get("power_budget_slots"), f"{path}.power_budget_slots", float, errors
    )
    if cores is not None and cores < 1:
        errors.append((f"{path}.cores", "must be >= 1"))
        return None
    if slots is not None and slots <= 0:
        errors.append((f"{path}.power_budget_slots", "must be > 0"))
        return None
    if None in (sid, rid, cores, slots):
        return None
    return ServerSpec(sid, rid, cores, slots)


def _parse_policy(obj: Any, path: str, errors: list) -> ScalePolicy | None:
    if obj is None:
        return None
    if not isinstance(obj, Mapping):
        errors.append((path, "expected a mapping"))
        return None
    kwargs: dict[str, Any] = {}
    allowed = {"kind", "threshold_pct", "schedule", "min_vms", "max_vms"}
    for key in obj:
        if key not in allowed:
            errors.append((f"{path}.{key}", "unknown field"))
            return None
        kwargs[key] = obj[key]
    if "schedule" in kwargs:
        kwargs["schedule"] = tuple(tuple(e) for e in kwargs["schedule"])
    try:
        return ScalePolicy(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append((path, str(exc)))
        return None


def _parse_workload(obj: Any, path: str, errors: list) -> WorkloadSpec | None:
    if not isinstance(obj, Mapping):
        errors.append((path, "expected a mapping"))
        return None
    allowed = {
        "workload_id", "model", "vms", "cores_per_vm", "region_id",
        "hints", "params", "autoscale",
    }
    for key in obj:
        if key not in allowed:
            errors.append((f"{path}.{key}", "unknown field"))
    wid = _want(obj.get("workload_id"), f"{path}.workload_id", str, errors)
    model = _want(obj.get("model"), f"{path}.model", str, errors)
    vms = _want(obj.get("vms"), f"{path}.vms", int, errors)
    cores = _want(obj.get("cores_per_vm"), f"{path}.cores_per_vm", int, errors)
    rid = _want(obj.get("region_id"), f"{path}.region_id", str, errors)
    if model is not None and model not in MODEL_NAMES:
        errors.append((f"{path}.model", f"unknown model, expected one of {MODEL_NAMES}"))
        return None
    if vms is not None and vms < 1:
        errors.append((f"{path}.vms", "must be >= 1"))
    if cores is not None and cores < 1:
        errors.append((f"{path}.cores_per_vm", "must be >= 1"))
    try:
        hints = validate_hints(obj.get("hints"))
    except HintValidationError as exc:
        for field, msg in exc.errors:
            errors.append((f"{path}.hints.{field}", msg))
        return None
    params = obj.get("params") or {}
    if not isinstance(params, Mapping):
        errors.append((f"{path}.params", "expected a mapping"))
        return None
    policy = _parse_policy(obj.get("autoscale"), f"{path}.autoscale", errors)
    if None in (wid, model, vms, cores, rid) or (vms is not None and vms < 1):
        return None
    return WorkloadSpec(wid, model, vms, cores, rid, hints, dict(params), policy)


def _parse_event(obj: Any, path: str, errors: list) -> ScriptedEvent | None:
    if not isinstance(obj, Mapping):
        errors.append((path, "expected a mapping"))
        return None
    at = _want(obj.get("at_ms"), f"{path}.at_ms", int, errors)
    kind = _want(obj.get("kind"), f"{path}.kind", str, errors)
    if kind is not None and kind not in EVENT_KINDS:
        errors.append((f"{path}.kind", f"unknown kind, expected one of {EVENT_KINDS}"))
        return None
    if at is None or kind is None:
        return None
    if at < 0:
        errors.append((f"{path}.at_ms", "must be >= 0"))
        return None
    params = {k: v for k, v in obj.items() if k not in ("at_ms", "kind")}
    if kind == "capacity_crunch":
        demand = _want(params.get("demand_cores"), f"{path}.demand_cores", int, errors)
        if demand is None or demand < 1:
            errors.append((f"{path}.demand_cores", "must be >= 1"))
            return None
        if "region_id" not in params:
            errors.append((f"{path}.region_id", "required"))
            return None
    else:  # power_cap
        if "region_id" not in params:
            errors.append((f"{path}.region_id", "required"))
            return None
        cap = params.get("cap_slots")
        if cap is not None and (
            not isinstance(cap, (int, float)) or isinstance(cap, bool) or cap <= 0
        ):
            errors.append((f"{path}.cap_slots", "must be > 0 or null"))
            return None
    return ScriptedEvent(at, kind, params)


def from_document(doc: Mapping[str, Any]) -> Scenario:
    """Parse and fully validate one scenario document."""
    if not isinstance(doc, Mapping):
        raise ScenarioValidationError([("", "document must be a mapping")])
    errors: list[tuple[str, str]] = []
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append((key, "unknown field"))

    name = _want(doc.get("name"), "name", str, errors, default="")
    seed = _want(doc.get("seed", 0), "seed", int, errors, default=0)
    duration = _want(doc.get("duration_ms"), "duration_ms", int, errors)
    tick = _want(doc.get("tick_ms", 1000), "tick_ms", int, errors, default=1000)
    if not name:
        errors.append(("name", "required"))
    if seed is not None and seed < 0:
        errors.append(("seed", "must be >= 0"))
    if duration is None or duration <= 0:
        errors.append(("duration_ms", "must be > 0"))
        duration = 1
    if tick is None or tick <= 0:
        errors.append(("tick_ms", "must be > 0"))
        tick = 1000

    regions: list[RegionProfile] = []
    for i, obj in enumerate(doc.get("regions") or []):
        r = _parse_region(obj, f"regions[{i}]", errors)
        if r is not None:
            regions.append(r)
    if not regions and not any(p.startswith("regions") for p, _ in errors):
        errors.append(("regions", "need at least one region"))
    region_ids = {r.region_id for r in regions}
    if len(region_ids) != len(regions):
        errors.append(("regions", "duplicate region_id"))

    servers: list[ServerSpec] = []
    for i, obj in enumerate(doc.get("servers") or []):
        s = _parse_server(obj, f"servers[{i}]", errors)
        if s is not None:
            servers.append(s)
            if s.region_id not in region_ids:
                errors.append((f"servers[{i}].region_id", f"unknown region {s.region_id!r}"))
    if not servers and not any(p.startswith("servers") for p, _ in errors):
        errors.append(("servers", "need at least one server"))
    if len({s.server_id for s in servers}) != len(servers):
        errors.append(("servers", "duplicate server_id"))

    workloads: list[WorkloadSpec] = []
    for i, obj in enumerate(doc.get("workloads") or []):
        w = _parse_workload(obj, f"workloads[{i}]", errors)
        if w is not None:
            workloads.append(w)
            if w.region_id not in region_ids:
                errors.append((f"workloads[{i}].region_id", f"unknown region {w.region_id!r}"))
    if not workloads and not any(p.startswith("workloads") for p, _ in errors):
        errors.append(("workloads", "need at least one workload"))
    if len({w.workload_id for w in workloads}) != len(workloads):
        errors.append(("workloads", "duplicate workload_id"))

    enabled: set[OptimizationId] = set()
    for i, val in enumerate(doc.get("enabled") or []):
        try:
            opt = OptimizationId(val)
        except ValueError:
            errors.append((f"enabled[{i}]", f"unknown optimization {val!r}"))
            continue
        if opt not in SIMULATED_OPTIMIZATIONS:
            errors.append((f"enabled[{i}]", f"{opt} has no simulation pass"))
            continue
        enabled.add(opt)

    events: list[ScriptedEvent] = []
    for i, obj in enumerate(doc.get("events") or []):
        e = _parse_event(obj, f"events[{i}]", errors)
        if e is not None:
            events.append(e)
            if e.at_ms >= duration:
                errors.append((f"events[{i}].at_ms", "beyond scenario duration"))
            region = e.params.get("region_id")
            if region is not None and region not in region_ids:
                errors.append((f"events[{i}].region_id", f"unknown region {region!r}"))

    use_runtime = doc.get("use_runtime_hints", True)
    if not isinstance(use_runtime, bool):
        errors.append(("use_runtime_hints", "expected true/false"))
        use_runtime = True
    notice = _want(doc.get("notice_ms", 30_000), "notice_ms", int, errors, 30_000)
    rs_window = _want(
        doc.get("rightsize_window_ms", 86_400_000), "rightsize_window_ms",
        int, errors, 86_400_000,
    )
    rs_check = _want(
        doc.get("rightsize_check_ms", 3_600_000), "rightsize_check_ms",
        int, errors, 3_600_000,
    )
    rate = _want(
        doc.get("broker_events_per_second", 200.0), "broker_events_per_second",
        float, errors, 200.0,
    )

    if errors:
        raise ScenarioValidationError(errors)
    scenario = Scenario(
        name=name,
        seed=seed,
        duration_ms=duration,
        tick_ms=tick,
        regions=tuple(regions),
        servers=tuple(servers),
        workloads=tuple(workloads),
        enabled=frozenset(enabled),
        events=tuple(sorted(events, key=lambda e: (e.at_ms, e.kind))),
        use_runtime_hints=use_runtime,
        notice_ms=notice,
        rightsize_window_ms=rs_window,
        rightsize_check_ms=rs_check,
        broker_events_per_second=rate,
    )
    check_scenario(scenario)
    return scenario


def check_scenario(scenario: Scenario) -> None:
    """Cross-field checks shared by the parser and directly-built scenarios."""
    errors: list[tuple[str, str]] = []
    if scenario.duration_ms <= 0:
        errors.append(("duration_ms", "must be > 0"))
    if scenario.tick_ms <= 0:
        errors.append(("tick_ms", "must be > 0"))
    if scenario.notice_ms < 0:
        errors.append(("notice_ms", "must be >= 0"))
    if not scenario.regions:
        errors.append(("regions", "need at least one region"))
    if not scenario.servers:
        errors.append(("servers", "need at least one server"))
    if not scenario.workloads:
        errors.append(("workloads", "need at least one workload"))
    if not math.isfinite(scenario.broker_events_per_second) or scenario.broker_events_per_second <= 0:
        errors.append(("broker_events_per_second", "must be > 0"))
    if errors:
        raise ScenarioValidationError(errors)
    from .workloads import check_model_params  # deferred: avoids an import cycle

    for i, wl in enumerate(scenario.workloads):
        errors.extend(check_model_params(wl, f"workloads[{i}].params"))
    if errors:
        raise ScenarioValidationError(errors)
    plan_placement(scenario.servers, scenario.workloads)


def load_scenario(path: str, seed: int | None = None) -> Scenario:
    """Read one scenario from a YAML file, optionally overriding the seed."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    scenario = from_document(doc)
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    return scenario
