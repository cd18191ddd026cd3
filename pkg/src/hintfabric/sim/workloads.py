"""The three workload behavior models.

Each model owns all VMs of one workload and is driven by the engine in
three phases per tick: ``control`` (schedule work, post runtime hints),
``on_notice`` (react to platform notifications), ``progress`` (advance
work at the granted compute rate). Models never talk to the broker
directly; they go through the port the engine hands them, which routes
hints into the per-server node agent mailboxes.

All internal iteration is in sorted order so a run is a pure function of
(scenario, seed).
"""

from __future__ import annotations

import dataclasses
import math
import random
from collections import deque
from collections.abc import Mapping
from typing import Any, Protocol

from ..hints import HintKind, NotificationKind, PlatformNotification, PreemptionPriority, ScalePreference
from .scenario import WorkloadSpec

_EVICT_KINDS = (NotificationKind.EVICTION, NotificationKind.PREEMPTION)


class WorkloadPort(Protocol):
    """What the engine exposes to a model."""

    def post(self, vm_id: str, kind: HintKind, value: Any, now_ms: int) -> None: ...
    def trace(self, now_ms: int, entity: str, event: str, detail: str) -> None: ...
    def cores(self, vm_id: str) -> int: ...


# ---------------------------------------------------------------------------
# Batch analytics


@dataclasses.dataclass
class _Task:
    job: int
    idx: int
    length_ms: float
    done_ms: float = 0.0
    started_at_ms: int = 0


class BatchAnalytics:
    """Task-queue batch jobs with an application-master VM.

    Jobs are scheduled in list order onto free task slots (one slot per
    core). Every control round each VM reports its preemption priority:
    High for the master or any long-lived task, Low when idle. Evicted
    VMs requeue their tasks at the last checkpoint; losing the master
    additionally requeues every in-flight task and pauses scheduling
    while a new master comes up.
    """

    def __init__(self, spec: WorkloadSpec, seed: int):
        self.workload_id = spec.workload_id
        p = dict(spec.params)
        self.checkpoint_ms = int(p.get("checkpoint_ms", 60_000))
        self.critical_age_ms = int(p.get("critical_age_ms", 30_000))
        self.master_restart_ms = int(p.get("master_restart_ms", 120_000))
        jitter_pct = float(p.get("jitter_pct", 10.0))
        rng = random.Random(seed)
        self._queue: deque[_Task] = deque()
        self._total_tasks = 0
        for j, job in enumerate(p["jobs"]):
            for idx in range(int(job["tasks"])):
                length = float(job["task_ms"]) * (
                    1.0 + jitter_pct / 100.0 * (2.0 * rng.random() - 1.0)
                )
                self._queue.append(_Task(job=j, idx=idx, length_ms=length))
                self._total_tasks += 1
        self._jobs_left = [int(job["tasks"]) for job in p["jobs"]]
        self._alive: dict[str, int] = {}
        self._running: dict[str, list[_Task]] = {}
        self._draining: set[str] = set()
        self._master: str | None = None
        self._paused_until = 0
        self._completed = 0
        self._work_done_ms = 0.0
        self._finished_at: int | None = None
        self.requeued_tasks = 0
        self.master_evictions = 0

    # -- lifecycle ----------------------------------------------------------

    def vm_added(self, vm_id: str, cores: int, now_ms: int) -> None:
        self._alive[vm_id] = cores
        self._running[vm_id] = []

    def vm_removed(self, vm_id: str, reason: str, now_ms: int, port: WorkloadPort) -> None:
        cores = self._alive.pop(vm_id, None)
        if cores is None:
            return
        self._draining.discard(vm_id)
        lost = self._running.pop(vm_id, [])
        if vm_id == self._master:
            # coordinator gone: all in-flight work must restart from its
            # checkpoint once a new master is up
            self.master_evictions += 1
            self._master = None
            self._paused_until = max(self._paused_until, now_ms + self.master_restart_ms)
            for other in sorted(self._running):
                lost.extend(self._running[other])
                self._running[other] = []
            port.trace(
                now_ms, self.workload_id, "master_down",
                f"vm={vm_id} resume_at_ms={self._paused_until}",
            )
        if lost:
            for task in sorted(lost, key=lambda t: (t.job, t.idx)):
                task.done_ms = math.floor(task.done_ms / self.checkpoint_ms) * self.checkpoint_ms
                self._queue.appendleft(task)
            self.requeued_tasks += len(lost)
            port.trace(
                now_ms, self.workload_id, "requeue",
                f"vm={vm_id} tasks={len(lost)}",
            )

    # -- per-tick phases ------------------------------------------------------

    def control(self, now_ms: int, port: WorkloadPort) -> None:
        if self._master is None and self._alive and now_ms >= self._paused_until:
            self._master = min(self._alive)
            port.trace(now_ms, self.workload_id, "master_elected", f"vm={self._master}")
        if self._master is not None and now_ms >= self._paused_until:
            for vm_id in sorted(self._alive):
                if vm_id in self._draining:
                    continue
                free = self._alive[vm_id] - len(self._running[vm_id])
                while free > 0 and self._queue:
                    task = self._queue.popleft()
                    task.started_at_ms = now_ms
                    self._running[vm_id].append(task)
                    free -= 1
        for vm_id in sorted(self._alive):
            port.post(vm_id, HintKind.PREEMPTION_PRIORITY, self._priority(vm_id, now_ms), now_ms)

    def _priority(self, vm_id: str, now_ms: int) -> PreemptionPriority:
        if vm_id == self._master:
            return PreemptionPriority.HIGH
        tasks = self._running[vm_id]
        if not tasks:
            return PreemptionPriority.LOW
        if any(now_ms - t.started_at_ms > self.critical_age_ms for t in tasks):
            return PreemptionPriority.HIGH
        return PreemptionPriority.NORMAL

    def on_notice(self, vm_id: str, note: PlatformNotification, now_ms: int, port: WorkloadPort) -> None:
        if note.kind in _EVICT_KINDS and vm_id in self._alive:
            self._draining.add(vm_id)

    def progress(self, now_ms: int, tick_ms: int, mults: Mapping[str, float], port: WorkloadPort) -> None:
        for vm_id in sorted(self._running):
            rate = mults.get(vm_id, 1.0)
            done: list[_Task] = []
            for task in self._running[vm_id]:
                step = min(tick_ms * rate, task.length_ms - task.done_ms)
                task.done_ms += step
                self._work_done_ms += step
                if task.done_ms >= task.length_ms - 1e-9:
                    done.append(task)
            for task in done:
                self._running[vm_id].remove(task)
                self._completed += 1
                self._jobs_left[task.job] -= 1
                if self._jobs_left[task.job] == 0:
                    port.trace(now_ms + tick_ms, self.workload_id, "job_done", f"job={task.job}")
        if self._finished_at is None and self._completed == self._total_tasks:
            self._finished_at = now_ms + tick_ms

    # -- read side ------------------------------------------------------------

    def util_pct(self, vm_id: str) -> float:
        cores = self._alive.get(vm_id, 0)
        if cores <= 0:
            return 0.0
        return 100.0 * len(self._running[vm_id]) / cores

    def workload_util_pct(self) -> float:
        total = sum(self._alive.values())
        if total <= 0:
            return 0.0
        busy = sum(len(ts) for ts in self._running.values())
        return 100.0 * busy / total

    def work_done(self) -> float:
        return self._work_done_ms

    def makespan_ms(self) -> int | None:
        return self._finished_at

    def counters(self) -> dict[str, float]:
        return {
            "tasks_total": self._total_tasks,
            "tasks_completed": self._completed,
            "tasks_requeued": self.requeued_tasks,
            "master_evictions": self.master_evictions,
        }


# ---------------------------------------------------------------------------
# Microservices


class Microservices:
    """Pod-packed web service behind a stepped request curve.

    Pods rebalance across non-draining nodes every control round. All
    nodes except the protected one (lowest id) opt into preemption via a
    runtime hint; a node at its pod cap withdraws the hint. An eviction
    notice drains the node: the next rebalance moves its pods to peers
    with headroom, so a notice costs no requests while headroom exists.
    """

    def __init__(self, spec: WorkloadSpec, seed: int):
        self.workload_id = spec.workload_id
        p = dict(spec.params)
        self.curve = sorted((int(t), float(r)) for t, r in p["curve"])
        self.rps_per_pod = float(p["rps_per_pod"])
        self.pods_per_node = int(p["pods_per_node"])
        self._alive: dict[str, int] = {}
        self._draining: set[str] = set()
        self._pods: dict[str, int] = {}
        self._posted: dict[tuple[str, HintKind], Any] = {}
        self._last_demand_pods = 0
        self.generated = 0.0
        self.served = 0.0
        self.dropped = 0.0

    def rps(self, now_ms: int) -> float:
        out = self.curve[0][1]
        for t, r in self.curve:
            if t <= now_ms:
                out = r
            else:
                break
        return out

    def demand_pods(self, now_ms: int) -> int:
        return math.ceil(self.rps(now_ms) / self.rps_per_pod)

    # -- lifecycle ----------------------------------------------------------

    def vm_added(self, vm_id: str, cores: int, now_ms: int) -> None:
        self._alive[vm_id] = cores
        self._pods[vm_id] = 0

    def vm_removed(self, vm_id: str, reason: str, now_ms: int, port: WorkloadPort) -> None:
        self._alive.pop(vm_id, None)
        self._draining.discard(vm_id)
        self._pods.pop(vm_id, None)
        for key in [k for k in self._posted if k[0] == vm_id]:
            del self._posted[key]

    # -- per-tick phases ------------------------------------------------------

    def _post_changed(self, port: WorkloadPort, vm_id: str, kind: HintKind, value: Any, now_ms: int) -> None:
        if self._posted.get((vm_id, kind)) != value:
            self._posted[(vm_id, kind)] = value
            port.post(vm_id, kind, value, now_ms)

    def control(self, now_ms: int, port: WorkloadPort) -> None:
        demand = self.demand_pods(now_ms)
        nodes = sorted(v for v in self._alive if v not in self._draining)
        for vm_id in self._alive:
            if vm_id not in nodes:
                self._pods[vm_id] = 0
        placed = {v: 0 for v in nodes}
        left = demand
        while left > 0:
            open_nodes = [v for v in nodes if placed[v] < self.pods_per_node]
            if not open_nodes:
                break
            target = min(open_nodes, key=lambda v: (placed[v], v))
            placed[target] += 1
            left -= 1
        for vm_id in nodes:
            self._pods[vm_id] = placed[vm_id]

        protected = min(self._alive) if self._alive else None
        pref = (
            ScalePreference.PREFER_GROW
            if demand > self._last_demand_pods
            else ScalePreference.NEUTRAL
        )
        self._last_demand_pods = demand
        for vm_id in sorted(self._alive):
            capped = self._pods.get(vm_id, 0) >= self.pods_per_node
            pct = 0 if vm_id == protected or capped else 100
            self._post_changed(port, vm_id, HintKind.PREEMPTIBILITY_PCT, pct, now_ms)
            self._post_changed(port, vm_id, HintKind.SCALE_PREFERENCE, pref, now_ms)

    def on_notice(self, vm_id: str, note: PlatformNotification, now_ms: int, port: WorkloadPort) -> None:
        if note.kind in _EVICT_KINDS and vm_id in self._alive:
            self._draining.add(vm_id)
            port.trace(now_ms, self.workload_id, "drain", f"vm={vm_id} pods={self._pods.get(vm_id, 0)}")

    def progress(self, now_ms: int, tick_ms: int, mults: Mapping[str, float], port: WorkloadPort) -> None:
        demand_rps = self.rps(now_ms)
        capacity_rps = sum(
            self._pods[v] * self.rps_per_pod * mults.get(v, 1.0)
            for v in sorted(self._alive)
        )
        served_rps = min(demand_rps, capacity_rps)
        secs = tick_ms / 1000.0
        self.generated += demand_rps * secs
        self.served += served_rps * secs
        lost = (demand_rps - served_rps) * secs
        self.dropped += lost
        if lost > 1e-9:
            port.trace(now_ms, self.workload_id, "dropped", f"requests={lost:.3f}")

    # -- read side ------------------------------------------------------------

    def util_pct(self, vm_id: str) -> float:
        return 100.0 * self._pods.get(vm_id, 0) / self.pods_per_node

    def workload_util_pct(self) -> float:
        nodes = [v for v in self._alive if v not in self._draining]
        if not nodes:
            return 0.0
        cap = len(nodes) * self.pods_per_node
        return 100.0 * self._last_demand_pods / cap

    def work_done(self) -> float:
        return self.served

    def makespan_ms(self) -> int | None:
        return None

    def counters(self) -> dict[str, float]:
        return {
            "requests_generated": self.generated,
            "requests_served": self.served,
            "requests_dropped": self.dropped,
        }


# ---------------------------------------------------------------------------
# Video conferencing


class VideoConference:
    """Call load with a daily shape and spikes on the hour and half-hour.

    Calls spread across VMs in proportion to capacity (cores x
    calls_per_core). VMs elevate their preemption priority while busy and
    mark themselves Low when nearly idle, so reclaim during a trough
    picks VMs that carry almost no calls.
    """

    def __init__(self, spec: WorkloadSpec, seed: int):
        self.workload_id = spec.workload_id
        p = dict(spec.params)
        self.hourly_calls = [float(x) for x in p["hourly_calls"]]
        self.calls_per_core = float(p["calls_per_core"])
        self.spike_pct = float(p.get("spike_pct", 40.0))
        self.spike_minutes = tuple(int(m) for m in p.get("spike_minutes", (0, 30)))
        self.spike_len_min = int(p.get("spike_len_min", 2))
        self.high_bar_pct = float(p.get("high_bar_pct", 70.0))
        self.low_bar_pct = float(p.get("low_bar_pct", 30.0))
        self._alive: dict[str, int] = {}
        self._draining: set[str] = set()
        self._assigned: dict[str, float] = {}
        self._posted: dict[str, PreemptionPriority] = {}
        self._demand = 0.0
        self.generated = 0.0
        self.served = 0.0
        self.dropped = 0.0

    def load(self, now_ms: int) -> float:
        hour = (now_ms // 3_600_000) % 24
        frac = (now_ms % 3_600_000) / 3_600_000
        base = self.hourly_calls[hour] * (1 - frac) + self.hourly_calls[(hour + 1) % 24] * frac
        minute = (now_ms // 60_000) % 60
        if any(0 <= minute - m < self.spike_len_min for m in self.spike_minutes):
            base *= 1.0 + self.spike_pct / 100.0
        return base

    # -- lifecycle ----------------------------------------------------------

    def vm_added(self, vm_id: str, cores: int, now_ms: int) -> None:
        self._alive[vm_id] = cores
        self._assigned[vm_id] = 0.0

    def vm_removed(self, vm_id: str, reason: str, now_ms: int, port: WorkloadPort) -> None:
        self._alive.pop(vm_id, None)
        self._draining.discard(vm_id)
        self._assigned.pop(vm_id, None)
        self._posted.pop(vm_id, None)

    def resized(self, vm_id: str, cores: int) -> None:
        if vm_id in self._alive:
            self._alive[vm_id] = cores

    # -- per-tick phases ------------------------------------------------------

    def control(self, now_ms: int, port: WorkloadPort) -> None:
        self._demand = self.load(now_ms)
        nodes = sorted(v for v in self._alive if v not in self._draining)
        total_cores = sum(self._alive[v] for v in nodes)
        for vm_id in self._alive:
            self._assigned[vm_id] = 0.0
        if total_cores > 0:
            for vm_id in nodes:
                self._assigned[vm_id] = self._demand * self._alive[vm_id] / total_cores
        for vm_id in sorted(self._alive):
            util = self.util_pct(vm_id)
            if util > self.high_bar_pct:
                prio = PreemptionPriority.HIGH
            elif util < self.low_bar_pct:
                prio = PreemptionPriority.LOW
            else:
                prio = PreemptionPriority.NORMAL
            if self._posted.get(vm_id) != prio:
                self._posted[vm_id] = prio
                port.post(vm_id, HintKind.PREEMPTION_PRIORITY, prio, now_ms)

    def on_notice(self, vm_id: str, note: PlatformNotification, now_ms: int, port: WorkloadPort) -> None:
        if note.kind in _EVICT_KINDS and vm_id in self._alive:
            self._draining.add(vm_id)

    def progress(self, now_ms: int, tick_ms: int, mults: Mapping[str, float], port: WorkloadPort) -> None:
        capacity = sum(
            self._alive[v] * self.calls_per_core * mults.get(v, 1.0)
            for v in sorted(self._alive)
        )
        served = min(self._demand, capacity)
        minutes = tick_ms / 60_000.0
        self.generated += self._demand * minutes
        self.served += served * minutes
        lost = (self._demand - served) * minutes
        self.dropped += lost
        if lost > 1e-9:
            port.trace(now_ms, self.workload_id, "dropped", f"call_minutes={lost:.3f}")

    # -- read side ------------------------------------------------------------

    def util_pct(self, vm_id: str) -> float:
        cores = self._alive.get(vm_id, 0)
        if cores <= 0:
            return 0.0
        return 100.0 * self._assigned.get(vm_id, 0.0) / (cores * self.calls_per_core)

    def workload_util_pct(self) -> float:
        total = sum(self._alive[v] for v in self._alive if v not in self._draining)
        if total <= 0:
            return 0.0
        return 100.0 * self._demand / (total * self.calls_per_core)

    def work_done(self) -> float:
        return self.served

    def makespan_ms(self) -> int | None:
        return None

    def counters(self) -> dict[str, float]:
        return {
            "call_minutes_generated": self.generated,
            "call_minutes_served": self.served,
            "call_minutes_dropped": self.dropped,
        }


# ---------------------------------------------------------------------------
# Registry + parameter checks

MODELS = {
    "batch_analytics": BatchAnalytics,
    "microservices": Microservices,
    "video_conference": VideoConference,
}


def build_model(spec: WorkloadSpec, seed: int):
    return MODELS[spec.model](spec, seed)


def check_model_params(spec: WorkloadSpec, where: str) -> list[tuple[str, str]]:
    """Static parameter validation; returns (path, problem) pairs."""
    p = spec.params
    errors: list[tuple[str, str]] = []
    if spec.model == "batch_analytics":
        jobs = p.get("jobs")
        if not isinstance(jobs, (list, tuple)) or not jobs:
            errors.append((f"{where}.jobs", "need a non-empty job list"))
            return errors
        for i, job in enumerate(jobs):
            if not isinstance(job, Mapping):
                errors.append((f"{where}.jobs[{i}]", "expected a mapping"))
                continue
            if not isinstance(job.get("tasks"), int) or job["tasks"] < 1:
                errors.append((f"{where}.jobs[{i}].tasks", "must be >= 1"))
            if not isinstance(job.get("task_ms"), (int, float)) or job["task_ms"] <= 0:
                errors.append((f"{where}.jobs[{i}].task_ms", "must be > 0"))
    elif spec.model == "microservices":
        curve = p.get("curve")
        if not isinstance(curve, (list, tuple)) or not curve:
            errors.append((f"{where}.curve", "need a non-empty [t_ms, rps] list"))
        else:
            for i, entry in enumerate(curve):
                if (
                    not isinstance(entry, (list, tuple))
                    or len(entry) != 2
                    or not all(isinstance(x, (int, float)) for x in entry)
                    or entry[1] < 0
                ):
                    errors.append((f"{where}.curve[{i}]", "expected [t_ms, rps >= 0]"))
        if not isinstance(p.get("rps_per_pod"), (int, float)) or p.get("rps_per_pod", 0) <= 0:
            errors.append((f"{where}.rps_per_pod", "must be > 0"))
        if not isinstance(p.get("pods_per_node"), int) or p.get("pods_per_node", 0) < 1:
            errors.append((f"{where}.pods_per_node", "must be >= 1"))
    elif spec.model == "video_conference":
        hours = p.get("hourly_calls")
        if not isinstance(hours, (list, tuple)) or len(hours) != 24:
            errors.append((f"{where}.hourly_calls", "need exactly 24 values"))
        elif any(not isinstance(x, (int, float)) or x < 0 for x in hours):
            errors.append((f"{where}.hourly_calls", "values must be >= 0"))
        if not isinstance(p.get("calls_per_core"), (int, float)) or p.get("calls_per_core", 0) <= 0:
            errors.append((f"{where}.calls_per_core", "must be > 0"))
    return errors
