"""Deterministic fleet simulator: scenarios, workload models, tick engine."""

from .engine import MetricsReport, SimResult, Simulation, WorkloadMetrics, run
from .scenario import (
    Scenario,
    ScenarioValidationError,
    ScriptedEvent,
    ServerSpec,
    WorkloadSpec,
    from_document,
    load_scenario,
    plan_placement,
)
from .workloads import BatchAnalytics, Microservices, VideoConference, build_model

__all__ = [
    "BatchAnalytics",
    "MetricsReport",
    "Microservices",
    "Scenario",
    "ScenarioValidationError",
    "ScriptedEvent",
    "ServerSpec",
    "SimResult",
    "Simulation",
    "VideoConference",
    "WorkloadMetrics",
    "WorkloadSpec",
    "build_model",
    "from_document",
    "load_scenario",
    "plan_placement",
    "run",
]
