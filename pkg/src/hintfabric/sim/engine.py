"""Deterministic tick loop driving workloads, agents, and platform passes.

One Simulation owns a broker, one node agent per server, and one behavior
model per workload. Each tick runs a fixed pipeline:

  1. apply eviction notices that have come due
  2. fire scripted events (capacity crunches, power caps)
  3. workload control rounds (scheduling decisions, runtime hints)
  4. agents collect and publish runtime hints
  5. platform passes in priority order: capacity shedding, rightsizing,
     autoscaling, underclocking, spot reclaim
  6. agents pump platform notifications into VM mailboxes; models react
  7. workloads progress at the granted frequency multipliers
  8. utilization sampling, per-tick pricing, physical safety checks

Everything iterates in sorted order, all randomness flows from the
scenario seed, and platform notifications travel through the broker, so
two runs of the same scenario produce byte-identical traces and logs.
The loop is intentionally serial: phase 5 resolves cross-server resource
contention, so parallelizing phases 3-4 would require a merge keyed by
server id to keep determinism. Desk-scale fleets do not need it.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from collections.abc import Mapping
from typing import Any

from ..accounting import PriceBook, VmUsage, applied_set, vm_price
from ..agent import AgentConfig, NodeAgent
from ..arbiter import ResourceClaim, ResourcePool, resolve
from ..broker import PLATFORM_PUBLISHER, Broker, RateLimitPolicy
from ..hints import (
    EffectiveHints,
    HintKind,
    NotificationKind,
    PlatformNotification,
    PreemptionPriority,
    RuntimeHint,
    UtilStats,
    eligibility,
)
from ..ids import FREQUENCY_MULTIPLIER, FrequencyLevel, OptimizationId, ResourceKind
from ..optimizers import autoscale, madc, rightsize, spot, underclock
from ..optimizers.rightsize import InsufficientHistoryError
from .scenario import Scenario, ServerSpec, WorkloadSpec, check_scenario
from .workloads import build_model

_EPS = 1e-9

_EVICT_KINDS = (NotificationKind.EVICTION, NotificationKind.PREEMPTION)


@dataclasses.dataclass
class _Vm:
    vm_id: str
    workload_id: str
    server_id: str
    region_id: str
    cores: int
    created_at_ms: int
    level: FrequencyLevel = FrequencyLevel.NOMINAL
    uc_throttled: bool = False
    madc_throttled: bool = False
    samples: list = dataclasses.field(default_factory=list)

    @property
    def power_slots(self) -> float:
        return self.cores * FREQUENCY_MULTIPLIER[int(self.level)]


@dataclasses.dataclass(frozen=True)
class _PendingEviction:
    vm_id: str
    workload_id: str
    effective_at_ms: int
    emergency: bool
    optimization: OptimizationId


@dataclasses.dataclass
class WorkloadMetrics:
    workload_id: str
    vm_hours_by_class: dict[str, float] = dataclasses.field(default_factory=dict)
    evictions_full_notice: int = 0
    evictions_emergency: int = 0
    evictions_high: int = 0
    scale_ins: int = 0
    scale_outs: int = 0
    throttle_seconds: float = 0.0
    work_done: float = 0.0
    makespan_ms: int | None = None
    slowdown: float | None = None
    counters: dict[str, float] = dataclasses.field(default_factory=dict)

    def to_document(self) -> dict[str, Any]:
        return {
            "vm_hours_by_class": {k: round(v, 6) for k, v in sorted(self.vm_hours_by_class.items())},
            "evictions_full_notice": self.evictions_full_notice,
            "evictions_emergency": self.evictions_emergency,
            "evictions_high": self.evictions_high,
            "scale_ins": self.scale_ins,
            "scale_outs": self.scale_outs,
            "throttle_seconds": round(self.throttle_seconds, 3),
            "work_done": round(self.work_done, 3),
            "makespan_ms": self.makespan_ms,
            "slowdown": None if self.slowdown is None else round(self.slowdown, 6),
            "counters": {k: round(v, 3) for k, v in sorted(self.counters.items())},
        }


@dataclasses.dataclass
class MetricsReport:
    scenario_name: str
    seed: int
    duration_ms: int
    workloads: dict[str, WorkloadMetrics]
    per_region_core_hours: dict[str, float]
    event_counts: dict[str, int]
    total_cost: float
    baseline_cost: float | None = None

    @property
    def savings_pct(self) -> float | None:
        if self.baseline_cost is None or self.baseline_cost <= 0:
            return None
        return 100.0 * (1.0 - self.total_cost / self.baseline_cost)

    def to_document(self) -> dict[str, Any]:
        savings = self.savings_pct
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "duration_ms": self.duration_ms,
            "total_cost": round(self.total_cost, 6),
            "baseline_cost": None if self.baseline_cost is None else round(self.baseline_cost, 6),
            "savings_pct": None if savings is None else round(savings, 4),
            "per_region_core_hours": {
                k: round(v, 6) for k, v in sorted(self.per_region_core_hours.items())
            },
            "event_counts": dict(sorted(self.event_counts.items())),
            "workloads": {
                wid: wm.to_document() for wid, wm in sorted(self.workloads.items())
            },
        }


@dataclasses.dataclass
class SimResult:
    scenario: Scenario
    trace: tuple[tuple[int, str, str, str], ...]
    metrics: MetricsReport
    broker: Broker
    baseline_metrics: MetricsReport | None = None

    def trace_csv(self) -> str:
        lines = ["time_ms,entity,event,detail"]
        lines.extend(f"{t},{entity},{event},{detail}" for t, entity, event, detail in self.trace)
        return "\n".join(lines) + "\n"


class _Port:
    """Workload-facing side of the engine: hint posting and tracing.

    Declared priorities are recorded here even when runtime hints are
    disabled so that eviction accounting always reflects what the
    workload believed, not what the platform happened to know.
    """

    def __init__(self, sim: "Simulation", workload_id: str):
        self._sim = sim
        self.workload_id = workload_id

    def post(self, vm_id: str, kind: HintKind, value: Any, now_ms: int) -> None:
        sim = self._sim
        if kind is HintKind.PREEMPTION_PRIORITY:
            sim._declared_priority[vm_id] = value
        if not sim.scenario.use_runtime_hints:
            return
        vm = sim._vms.get(vm_id)
        if vm is None:
            return
        agent = sim._agents[vm.server_id]
        agent.post_hint(RuntimeHint(vm_id=vm_id, kind=kind, value=value, timestamp_ms=now_ms))

    def trace(self, now_ms: int, entity: str, event: str, detail: str) -> None:
        self._sim._trace.append((now_ms, entity, event, detail))

    def cores(self, vm_id: str) -> int:
        vm = self._sim._vms.get(vm_id)
        return 0 if vm is None else vm.cores


class Simulation:
    """One run of one scenario. Build, call execute(), read the result."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.broker = Broker(
            default_policy=RateLimitPolicy(events_per_second=scenario.broker_events_per_second)
        )
        self._book = PriceBook(regions=scenario.regions)
        self._servers: dict[str, ServerSpec] = {s.server_id: s for s in scenario.servers}
        self._server_used: dict[str, int] = {s.server_id: 0 for s in scenario.servers}
        self._agents: dict[str, NodeAgent] = {
            s.server_id: NodeAgent(
                s.server_id,
                s.region_id,
                self.broker,
                AgentConfig(
                    poll_interval_ms=scenario.tick_ms,
                    eviction_notice_ms=scenario.notice_ms,
                ),
            )
            for s in scenario.servers
        }
        self._specs: dict[str, WorkloadSpec] = {w.workload_id: w for w in scenario.workloads}
        self._models: dict[str, Any] = {}
        self._ports: dict[str, _Port] = {}
        self._vms: dict[str, _Vm] = {}
        self._next_vm_index: dict[str, int] = {}
        self._pending: list[_PendingEviction] = []
        self._pending_ids: set[str] = set()
        self._caps: dict[str, float | None] = {}
        self._shortfall: dict[str, float] = {}
        self._declared_priority: dict[str, PreemptionPriority] = {}
        self._last_hint_value: dict[tuple[str, HintKind], Any] = {}
        self._trace: list[tuple[int, str, str, str]] = []
        self._event_counts: Counter = Counter()
        self._metrics: dict[str, WorkloadMetrics] = {}
        self._region_core_hours: Counter = Counter()
        self._total_cost = 0.0

        for index, spec in enumerate(scenario.workloads):
            model = build_model(spec, seed=scenario.seed * 10007 + index)
            self._models[spec.workload_id] = model
            self._ports[spec.workload_id] = _Port(self, spec.workload_id)
            self._metrics[spec.workload_id] = WorkloadMetrics(spec.workload_id)
            self._next_vm_index[spec.workload_id] = spec.vms
            for i in range(spec.vms):
                self._create_vm(spec, f"{spec.workload_id}-{i:03d}", now_ms=0)
            self.broker.set_deployment_hints(spec.workload_id, spec.hints, timestamp_ms=0)

    # -- fleet plumbing -------------------------------------------------------

    def _create_vm(self, spec: WorkloadSpec, vm_id: str, now_ms: int) -> _Vm | None:
        server = self._pick_server(spec)
        if server is None:
            return None
        vm = _Vm(
            vm_id=vm_id,
            workload_id=spec.workload_id,
            server_id=server.server_id,
            region_id=server.region_id,
            cores=spec.cores_per_vm,
            created_at_ms=now_ms,
        )
        self._vms[vm_id] = vm
        self._server_used[server.server_id] += vm.cores
        self.broker.register_vm(
            vm_id,
            server.server_id,
            server.server_id,  # one server per rack slot in this fleet
            server.region_id,
            spec.workload_id,
            vm.cores,
            timestamp_ms=now_ms,
        )
        self._agents[server.server_id].attach_vm(vm_id, spec.workload_id)
        self._models[spec.workload_id].vm_added(vm_id, vm.cores, now_ms)
        return vm

    def _pick_server(self, spec: WorkloadSpec) -> ServerSpec | None:
        per_wl: Counter = Counter()
        for vm in self._vms.values():
            if vm.workload_id == spec.workload_id:
                per_wl[vm.server_id] += 1
        options = [
            s
            for s in self.scenario.servers
            if s.region_id == spec.region_id
            and self._server_used[s.server_id] + spec.cores_per_vm <= s.cores
        ]
        if not options:
            return None
        return min(
            options,
            key=lambda s: (per_wl[s.server_id], self._server_used[s.server_id], s.server_id),
        )

    def _destroy_vm(self, vm_id: str, reason: str, now_ms: int) -> None:
        vm = self._vms.pop(vm_id)
        self._pending_ids.discard(vm_id)
        model = self._models[vm.workload_id]
        model.vm_removed(vm_id, reason, now_ms, self._ports[vm.workload_id])
        self._agents[vm.server_id].detach_vm(vm_id)
        self.broker.unregister_vm(vm_id, timestamp_ms=now_ms)
        self._server_used[vm.server_id] -= vm.cores
        self._declared_priority.pop(vm_id, None)

    def _effective(self, vm_id: str) -> EffectiveHints:
        # with runtime hints off nothing reaches the store, so this is
        # exactly the deployment HintSet wrapped with default priorities
        return self.broker.store.effective(vm_id)

    def _alive(self, workload_id: str | None = None, region_id: str | None = None) -> list[_Vm]:
        out = [
            vm
            for vm in self._vms.values()
            if (workload_id is None or vm.workload_id == workload_id)
            and (region_id is None or vm.region_id == region_id)
        ]
        out.sort(key=lambda v: v.vm_id)
        return out

    # -- notifications --------------------------------------------------------

    def _publish_notification(self, note: PlatformNotification, now_ms: int) -> None:
        vm = self._vms[note.vm_id]
        topic = f"platform-notifications/{vm.region_id}/{vm.server_id}/{note.vm_id}"
        # platform control traffic is not subject to tenant rate limits
        self.broker.publish(PLATFORM_PUBLISHER, topic, note, now_ms, _internal=True)
        self._event_counts[note.kind.value] += 1

    def _queue_eviction(self, note: PlatformNotification, now_ms: int) -> None:
        vm = self._vms[note.vm_id]
        self._pending.append(
            _PendingEviction(
                vm_id=note.vm_id,
                workload_id=vm.workload_id,
                effective_at_ms=note.effective_at_ms,
                emergency=note.emergency,
                optimization=note.optimization,
            )
        )
        self._pending_ids.add(note.vm_id)
        self._trace.append(
            (
                now_ms,
                note.vm_id,
                "preempt_notice",
                f"effective_at_ms={note.effective_at_ms} "
                f"notice_ms={note.notice_ms} "
                f"emergency={int(note.emergency)} opt={note.optimization.value}",
            )
        )

    def _apply_due_evictions(self, now_ms: int) -> None:
        due = [p for p in self._pending if p.effective_at_ms <= now_ms]
        if not due:
            return
        self._pending = [p for p in self._pending if p.effective_at_ms > now_ms]
        for pend in sorted(due, key=lambda p: (p.effective_at_ms, p.vm_id)):
            if pend.vm_id not in self._vms:
                continue
            wm = self._metrics[pend.workload_id]
            if pend.emergency:
                wm.evictions_emergency += 1
            else:
                wm.evictions_full_notice += 1
            declared = self._declared_priority.get(pend.vm_id, PreemptionPriority.NORMAL)
            if declared is PreemptionPriority.HIGH:
                wm.evictions_high += 1
            self._trace.append(
                (
                    now_ms,
                    pend.vm_id,
                    "evict",
                    f"opt={pend.optimization.value} emergency={int(pend.emergency)} "
                    f"declared={declared.value}",
                )
            )
            self._destroy_vm(pend.vm_id, "evicted", now_ms)

    # -- platform passes ------------------------------------------------------

    def _madc_pass(self, now_ms: int) -> None:
        for region_id in sorted(self._caps):
            cap = self._caps[region_id]
            vms = self._alive(region_id=region_id)
            if cap is None:
                self._restore_throttled(region_id, vms, slack=None, now_ms=now_ms)
                self._shortfall[region_id] = 0.0
                continue
            draw = sum(vm.power_slots for vm in vms if vm.vm_id not in self._pending_ids)
            if draw > cap + _EPS:
                self._shed_region(region_id, draw - cap, vms, now_ms)
            else:
                self._shortfall[region_id] = 0.0
                self._restore_throttled(region_id, vms, slack=cap - draw, now_ms=now_ms)

    def _shed_region(self, region_id: str, target: float, vms: list[_Vm], now_ms: int) -> None:
        candidates = []
        for vm in vms:
            if vm.vm_id in self._pending_ids:
                continue
            eff = self._effective(vm.vm_id)
            throttle_ok = OptimizationId.MADC in eligibility(eff)
            candidates.append(
                madc.ShedCandidate(
                    vm_id=vm.vm_id,
                    workload_id=vm.workload_id,
                    cores=vm.cores,
                    level=vm.level,
                    throttle_eligible=throttle_ok,
                    preemptible=throttle_ok
                    and eff.field(HintKind.PREEMPTIBILITY_PCT) >= 20,
                    created_at_ms=vm.created_at_ms,
                    priority=eff.preemption_priority,
                )
            )
        plan, notes = madc.shed(
            target, candidates, now_ms=now_ms, notice_ms=self.scenario.notice_ms
        )
        for step in plan.throttles:
            vm = self._vms[step.vm_id]
            vm.level = step.to_level
            vm.madc_throttled = True
            self._trace.append(
                (
                    now_ms,
                    step.vm_id,
                    "throttle",
                    f"from={int(step.from_level)} to={int(step.to_level)} opt=madc",
                )
            )
        for note in notes:
            self._publish_notification(note, now_ms)
            if note.kind in _EVICT_KINDS:
                self._queue_eviction(note, now_ms)
        self._shortfall[region_id] = plan.shortfall_power
        if plan.shortfall_power > _EPS:
            self._trace.append(
                (
                    now_ms,
                    region_id,
                    "shed_short",
                    f"target={target:.3f} shed={plan.shed_power:.3f} "
                    f"short={plan.shortfall_power:.3f}",
                )
            )

    def _restore_throttled(
        self, region_id: str, vms: list[_Vm], slack: float | None, now_ms: int
    ) -> None:
        throttled = [vm for vm in vms if vm.madc_throttled and vm.vm_id not in self._pending_ids]
        if not throttled:
            return
        if slack is None:
            grantees = throttled
        else:
            # cores come back whole: a VM either regains nominal frequency
            # or stays throttled until the cap lifts further
            claims = [
                ResourceClaim(
                    optimization=OptimizationId.MADC,
                    kind=ResourceKind.CPU_FREQUENCY,
                    amount=vm.cores * (1.0 - FREQUENCY_MULTIPLIER[int(vm.level)]),
                    timestamp_ms=vm.created_at_ms,
                    owner=vm.workload_id,
                    claimant=vm.vm_id,
                )
                for vm in throttled
            ]
            pool = ResourcePool(
                kind=ResourceKind.CPU_FREQUENCY,
                capacity=slack,
                compressible=False,
                pool_id=region_id,
            )
            allocation = resolve(pool, claims, seed=self.scenario.seed)
            grantees = [
                vm for vm, granted in zip(throttled, allocation.grants) if granted > _EPS
            ]
        for vm in grantees:
            note = PlatformNotification(
                kind=NotificationKind.SCALE_UP,
                vm_id=vm.vm_id,
                issued_at_ms=now_ms,
                effective_at_ms=now_ms,
                payload={"from_level": int(vm.level), "to_level": int(FrequencyLevel.NOMINAL)},
                optimization=OptimizationId.MADC,
            )
            self._trace.append(
                (now_ms, vm.vm_id, "restore", f"from={int(vm.level)} to=0 opt=madc")
            )
            vm.level = FrequencyLevel.NOMINAL
            vm.madc_throttled = False
            self._publish_notification(note, now_ms)

    def _rightsize_pass(self, now_ms: int) -> None:
        if now_ms == 0 or now_ms % self.scenario.rightsize_check_ms != 0:
            return
        window = self.scenario.rightsize_window_ms
        for vm in self._alive():
            if vm.vm_id in self._pending_ids:
                continue
            vm.samples = [(ts, s) for ts, s in vm.samples if ts >= now_ms - window]
            try:
                # samples land at the end of each tick, so a full window of
                # history spans one sampling gap less than the window itself
                advice = rightsize.recommend(
                    vm.vm_id,
                    vm.cores,
                    vm.samples,
                    window_ms=window - self.scenario.tick_ms,
                )
            except InsufficientHistoryError:
                continue
            if advice is None:
                continue
            eff = self._effective(vm.vm_id)
            if not rightsize.auto_apply(eff):
                self._trace.append(
                    (
                        now_ms,
                        vm.vm_id,
                        "resize_advice",
                        f"from={advice.current_cores} to={advice.target_cores} "
                        f"reason={advice.reason} auto=0",
                    )
                )
                continue
            delta = advice.target_cores - vm.cores
            server = self._servers[vm.server_id]
            if delta > 0 and self._server_used[vm.server_id] + delta > server.cores:
                self._trace.append(
                    (
                        now_ms,
                        vm.vm_id,
                        "resize_blocked",
                        f"to={advice.target_cores} free={server.cores - self._server_used[vm.server_id]}",
                    )
                )
                continue
            self._server_used[vm.server_id] += delta
            vm.cores = advice.target_cores
            vm.samples.clear()  # fresh window for the new size
            model = self._models[vm.workload_id]
            if hasattr(model, "resized"):
                model.resized(vm.vm_id, vm.cores)
            self._event_counts["resize"] += 1
            self._trace.append(
                (
                    now_ms,
                    vm.vm_id,
                    "resize",
                    f"from={advice.current_cores} to={advice.target_cores} "
                    f"reason={advice.reason} auto=1",
                )
            )

    def _autoscale_pass(self, now_ms: int) -> None:
        for spec in self.scenario.workloads:
            if spec.autoscale is None:
                continue
            if OptimizationId.AUTO_SCALING not in eligibility(spec.hints):
                continue
            wid = spec.workload_id
            alive = [vm for vm in self._alive(workload_id=wid) if vm.vm_id not in self._pending_ids]
            model = self._models[wid]
            action = autoscale.tick(
                wid, len(alive), model.workload_util_pct(), spec.autoscale, now_ms
            )
            if action.delta > 0:
                for _ in range(action.delta):
                    vm_id = f"{wid}-{self._next_vm_index[wid]:03d}"
                    vm = self._create_vm(spec, vm_id, now_ms)
                    if vm is None:
                        self._trace.append(
                            (now_ms, wid, "no_capacity", f"wanted={action.delta}")
                        )
                        break
                    self._next_vm_index[wid] += 1
                    self._metrics[wid].scale_outs += 1
                    self._trace.append(
                        (now_ms, vm_id, "scale_out", f"server={vm.server_id} vms={len(self._alive(workload_id=wid))}")
                    )
            elif action.delta < 0:
                victims = sorted(alive, key=lambda v: (v.created_at_ms, v.vm_id), reverse=True)
                for vm in victims[: -action.delta]:
                    self._metrics[wid].scale_ins += 1
                    self._trace.append(
                        (now_ms, vm.vm_id, "scale_in", f"vms={len(self._alive(workload_id=wid)) - 1}")
                    )
                    self._destroy_vm(vm.vm_id, "scale_in", now_ms)

    def _underclock_pass(self, now_ms: int) -> None:
        candidates = []
        vms_by_id = {}
        for vm in self._alive():
            if vm.vm_id in self._pending_ids or vm.madc_throttled:
                continue
            eff = self._effective(vm.vm_id)
            if OptimizationId.UNDERCLOCKING not in eligibility(eff) and not vm.uc_throttled:
                continue
            model = self._models[vm.workload_id]
            candidates.append(
                underclock.UnderclockCandidate(
                    vm_id=vm.vm_id,
                    utilization_pct=model.util_pct(vm.vm_id),
                    level=vm.level,
                    preference=eff.scale_preference,
                )
            )
            vms_by_id[vm.vm_id] = vm
        for action in underclock.plan(candidates):
            vm = vms_by_id[action.vm_id]
            vm.level = action.to_level
            vm.uc_throttled = action.to_level is not FrequencyLevel.NOMINAL
            kind = (
                NotificationKind.SCALE_DOWN
                if int(action.to_level) < int(action.from_level)
                else NotificationKind.SCALE_UP
            )
            self._publish_notification(
                PlatformNotification(
                    kind=kind,
                    vm_id=vm.vm_id,
                    issued_at_ms=now_ms,
                    effective_at_ms=now_ms,
                    payload={
                        "from_level": int(action.from_level),
                        "to_level": int(action.to_level),
                    },
                    optimization=OptimizationId.UNDERCLOCKING,
                ),
                now_ms,
            )
            self._trace.append(
                (
                    now_ms,
                    vm.vm_id,
                    "underclock" if kind is NotificationKind.SCALE_DOWN else "restore",
                    f"from={int(action.from_level)} to={int(action.to_level)} opt=underclocking",
                )
            )

    def _spot_pass(self, now_ms: int, crunches: list) -> None:
        for event in crunches:
            region_id = event.params["region_id"]
            demand = int(event.params["demand_cores"])
            self._trace.append(
                (now_ms, region_id, "capacity_crunch", f"demand_cores={demand}")
            )
            candidates: list[spot.SpotCandidate] = []
            budgets: dict[str, spot.WorkloadBudget] = {}
            for spec in self.scenario.workloads:
                wid = spec.workload_id
                alive = [
                    vm
                    for vm in self._alive(workload_id=wid, region_id=region_id)
                    if vm.vm_id not in self._pending_ids
                ]
                if not alive:
                    continue
                in_flight = sum(1 for p in self._pending if p.workload_id == wid)
                opted = []
                for vm in alive:
                    eff = self._effective(vm.vm_id)
                    if eff.field(HintKind.PREEMPTIBILITY_PCT) >= 20:
                        opted.append((vm, eff.preemption_priority))
                if not opted:
                    continue
                dep_pct = spec.hints.preemptibility_pct
                if dep_pct >= 20:
                    budgets[wid] = spot.WorkloadBudget(len(alive), dep_pct, in_flight)
                else:
                    # workload opted in per-VM at runtime: every opted VM is
                    # fair game, but only the opted ones count toward the cap
                    budgets[wid] = spot.WorkloadBudget(len(opted), 100, in_flight)
                candidates.extend(
                    spot.SpotCandidate(
                        vm_id=vm.vm_id,
                        workload_id=wid,
                        cores=vm.cores,
                        created_at_ms=vm.created_at_ms,
                        priority=priority,
                    )
                    for vm, priority in opted
                )
            plan, notes = spot.reclaim(
                demand,
                candidates,
                budgets,
                now_ms=now_ms,
                notice_ms=self.scenario.notice_ms,
            )
            for note in notes:
                self._publish_notification(note, now_ms)
                self._queue_eviction(note, now_ms)
            self._trace.append(
                (
                    now_ms,
                    region_id,
                    "reclaim",
                    f"demand={demand} freed={plan.freed_cores} "
                    f"evictions={len(plan.evict)} short={int(plan.insufficient)}",
                )
            )

    # -- tick assembly ----------------------------------------------------------

    def _collect_hints(self, now_ms: int) -> None:
        for server_id in sorted(self._agents):
            report = self._agents[server_id].collect(now_ms)
            self._event_counts["runtime_hints_accepted"] += len(report.accepted)
            self._event_counts["runtime_hints_ignored"] += len(report.ignored)
            self._event_counts["runtime_hints_rate_limited"] += len(report.rate_limited)
            for hint in report.accepted:
                key = (hint.vm_id, hint.kind)
                value = getattr(hint.value, "value", hint.value)
                if self._last_hint_value.get(key) != value:
                    self._last_hint_value[key] = value
                    self._trace.append(
                        (now_ms, hint.vm_id, "hint", f"kind={hint.kind.value} value={value}")
                    )

    def _pump_notifications(self, now_ms: int) -> None:
        for server_id in sorted(self._agents):
            agent = self._agents[server_id]
            agent.pump(now_ms)
            for vm_id in agent.vm_ids():
                events = agent.read_scheduled_events(vm_id, now_ms)
                if not events:
                    continue
                vm = self._vms.get(vm_id)
                if vm is not None:
                    model = self._models[vm.workload_id]
                    port = self._ports[vm.workload_id]
                    for note in events:
                        model.on_notice(vm_id, note, now_ms, port)
                agent.acknowledge(vm_id, events)

    def _progress(self, now_ms: int) -> None:
        for spec in self.scenario.workloads:
            wid = spec.workload_id
            mults = {
                vm.vm_id: FREQUENCY_MULTIPLIER[int(vm.level)]
                for vm in self._alive(workload_id=wid)
            }
            self._models[wid].progress(
                now_ms, self.scenario.tick_ms, mults, self._ports[wid]
            )

    def _account(self, now_ms: int) -> None:
        tick_h = self.scenario.tick_ms / 3_600_000.0
        enabled = self.scenario.enabled
        for vm in self._alive():
            model = self._models[vm.workload_id]
            util = min(100.0, max(0.0, model.util_pct(vm.vm_id)))
            stats = UtilStats(
                p95_cpu_pct=util, p95_max_cpu_pct=util, peak_pct={"cpu": util}
            )
            applied = applied_set(
                eligibility(self._effective(vm.vm_id), stats) & enabled
            )
            key = "+".join(sorted(opt.value for opt in applied)) or "on_demand"
            wm = self._metrics[vm.workload_id]
            wm.vm_hours_by_class[key] = wm.vm_hours_by_class.get(key, 0.0) + tick_h
            self._total_cost += vm_price(
                VmUsage(cores=vm.cores, vm_hours=tick_h, region_id=vm.region_id),
                applied,
                book=self._book,
            )
            self._region_core_hours[vm.region_id] += vm.cores * tick_h
            if vm.level is not FrequencyLevel.NOMINAL:
                wm.throttle_seconds += self.scenario.tick_ms / 1000.0
            vm.samples.append((now_ms, stats))

    def _check_physics(self, now_ms: int) -> None:
        for server_id, used in self._server_used.items():
            if used > self._servers[server_id].cores:
                raise AssertionError(
                    f"server {server_id} oversubscribed at t={now_ms}: "
                    f"{used} > {self._servers[server_id].cores} cores"
                )
        if OptimizationId.MADC not in self.scenario.enabled:
            return
        for region_id, cap in self._caps.items():
            if cap is None:
                continue
            committed = sum(
                vm.power_slots
                for vm in self._vms.values()
                if vm.region_id == region_id and vm.vm_id not in self._pending_ids
            )
            allowance = cap + self._shortfall.get(region_id, 0.0) + 1e-6
            if committed > allowance:
                raise AssertionError(
                    f"region {region_id} over power cap at t={now_ms}: "
                    f"{committed:.3f} > {allowance:.3f} slots"
                )

    def execute(self) -> MetricsReport:
        scenario = self.scenario
        events = list(scenario.events)
        cursor = 0
        for now_ms in range(0, scenario.duration_ms, scenario.tick_ms):
            self._apply_due_evictions(now_ms)

            crunches = []
            while cursor < len(events) and events[cursor].at_ms <= now_ms:
                event = events[cursor]
                cursor += 1
                if event.kind == "capacity_crunch":
                    crunches.append(event)
                else:
                    region_id = event.params["region_id"]
                    cap = event.params.get("cap_slots")
                    self._caps[region_id] = None if cap is None else float(cap)
                    self._event_counts["power_cap"] += 1
                    self._trace.append(
                        (
                            now_ms,
                            region_id,
                            "power_cap",
                            "cap=lifted" if cap is None else f"cap={float(cap):.3f}",
                        )
                    )

            for spec in scenario.workloads:
                self._models[spec.workload_id].control(now_ms, self._ports[spec.workload_id])
            self._collect_hints(now_ms)

            if OptimizationId.MADC in scenario.enabled:
                self._madc_pass(now_ms)
            if OptimizationId.RIGHTSIZING in scenario.enabled:
                self._rightsize_pass(now_ms)
            if OptimizationId.AUTO_SCALING in scenario.enabled:
                self._autoscale_pass(now_ms)
            if OptimizationId.UNDERCLOCKING in scenario.enabled:
                self._underclock_pass(now_ms)
            if OptimizationId.SPOT_VMS in scenario.enabled and crunches:
                self._spot_pass(now_ms, crunches)

            self._pump_notifications(now_ms)
            self._progress(now_ms)
            self._account(now_ms)
            self._check_physics(now_ms)

        return self._finalize()

    def _finalize(self) -> MetricsReport:
        for wid, model in self._models.items():
            wm = self._metrics[wid]
            wm.work_done = model.work_done()
            wm.makespan_ms = model.makespan_ms()
            wm.counters = model.counters()
        return MetricsReport(
            scenario_name=self.scenario.name,
            seed=self.scenario.seed,
            duration_ms=self.scenario.duration_ms,
            workloads=self._metrics,
            per_region_core_hours=dict(self._region_core_hours),
            event_counts=dict(self._event_counts),
            total_cost=self._total_cost,
        )


def run(scenario: Scenario, with_baseline: bool = True) -> SimResult:
    """Execute a scenario, then (optionally) the do-nothing twin.

    The baseline disables every optimization but keeps the same fleet,
    seed, and workload behavior; slowdown is work-relative for services
    and makespan-relative for batch.
    """
    check_scenario(scenario)
    sim = Simulation(scenario)
    metrics = sim.execute()
    baseline_metrics = None
    if with_baseline:
        if scenario.enabled:
            baseline = Simulation(dataclasses.replace(scenario, enabled=frozenset()))
            baseline_metrics = baseline.execute()
        else:
            baseline_metrics = metrics
        metrics.baseline_cost = baseline_metrics.total_cost
        for wid, wm in metrics.workloads.items():
            base = baseline_metrics.workloads[wid]
            if wm.makespan_ms is not None and base.makespan_ms:
                wm.slowdown = wm.makespan_ms / base.makespan_ms
            elif base.work_done > 0 and wm.work_done > 0:
                wm.slowdown = base.work_done / wm.work_done
    return SimResult(
        scenario=scenario,
        trace=tuple(sim._trace),
        metrics=metrics,
        broker=sim.broker,
        baseline_metrics=baseline_metrics,
    )
