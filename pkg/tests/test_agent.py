"""Node agent: mailbox collection, notice enforcement, scheduled events."""

import pytest

from hintfabric import (
    HintKind,
    NotificationKind,
    PlatformNotification,
    PreemptionPriority,
    RuntimeHint,
)
from hintfabric.agent import AgentConfig, NodeAgent, NoticeViolationError
from hintfabric.broker import Broker, RateLimitPolicy, Scope, UnknownVmError


def build(policy_rate=1000):
    broker = Broker(default_policy=RateLimitPolicy(events_per_second=policy_rate))
    agent = NodeAgent("s1", "east", broker)
    broker.register_vm("vm1", "s1", "r1", "east", "jobs", 8)
    broker.register_vm("vm2", "s1", "r1", "east", "jobs", 8)
    broker.set_deployment_hints("jobs", {"preemptibility_pct": 100})
    agent.attach_vm("vm1", "jobs")
    agent.attach_vm("vm2", "jobs")
    return broker, agent


def prio(vm, value, ts):
    return RuntimeHint(vm_id=vm, kind=HintKind.PREEMPTION_PRIORITY, value=value, timestamp_ms=ts)


def notice(vm, issued, effective, kind=NotificationKind.PREEMPTION, emergency=False):
    return PlatformNotification(
        kind=kind, vm_id=vm, issued_at_ms=issued, effective_at_ms=effective,
        emergency=emergency,
    )


def test_collect_publishes_single_hint():
    broker, agent = build()
    agent.post_hint(prio("vm1", PreemptionPriority.HIGH, 500))
    report = agent.collect(1000)
    assert len(report.accepted) == 1
    assert broker.get(Scope.VM, "vm1").preemption_priority is PreemptionPriority.HIGH


def test_collect_preserves_mailbox_order():
    broker, agent = build()
    sub = broker.subscribe("runtime-hints/east/s1/*")
    values = [PreemptionPriority.LOW, PreemptionPriority.HIGH, PreemptionPriority.LOW]
    for i, v in enumerate(values):
        agent.post_hint(prio("vm1", v, i * 100))
    agent.collect(1000)
    got = [e.payload.value for e in sub.poll()]
    assert got == values


def test_flapping_hint_rejected_with_notification():
    broker, agent = build()
    toggles = [PreemptionPriority.LOW, PreemptionPriority.HIGH] * 3
    for i, v in enumerate(toggles):
        agent.post_hint(prio("vm1", v, i * 10_000))
        report = agent.collect(i * 10_000)
    # the 6th update is the 5th flip inside one minute
    assert len(report.ignored) == 1
    rejection = report.ignored[0]
    assert rejection.vm_id == "vm1" and rejection.kind is HintKind.PREEMPTION_PRIORITY
    # broker still holds the last accepted value
    assert broker.get(Scope.VM, "vm1").preemption_priority is toggles[-2]


def test_rate_limited_hint_dropped_and_counted():
    broker, agent = build(policy_rate=2)
    for i in range(5):
        agent.post_hint(prio("vm1", PreemptionPriority.HIGH if i % 2 else PreemptionPriority.LOW, i))
    report = agent.collect(0)
    assert len(report.accepted) == 2
    assert len(report.rate_limited) == 3
    assert broker.rate_limited_count == 3


def test_deliver_respects_notice_floor():
    _, agent = build()
    agent.deliver(notice("vm1", issued=100_000, effective=130_000), 100_000)
    events = agent.read_scheduled_events("vm1", 100_000)
    assert len(events) == 1 and events[0].notice_ms == 30_000
    with pytest.raises(NoticeViolationError):
        agent.deliver(notice("vm1", issued=100_000, effective=120_000), 100_000)
    # emergency events may bypass the floor but stay flagged
    agent.deliver(notice("vm1", issued=100_000, effective=101_000, emergency=True), 100_000)
    assert any(e.emergency for e in agent.read_scheduled_events("vm1", 100_000))


def test_scale_up_visible_on_next_read():
    _, agent = build()
    agent.deliver(notice("vm2", 5_000, 5_000, kind=NotificationKind.SCALE_UP), 5_000)
    events = agent.read_scheduled_events("vm2", 6_000)
    assert [e.kind for e in events] == [NotificationKind.SCALE_UP]


def test_read_is_idempotent_until_acknowledged():
    _, agent = build()
    agent.deliver(notice("vm1", 0, 30_000), 0)
    first = agent.read_scheduled_events("vm1", 1_000)
    second = agent.read_scheduled_events("vm1", 2_000)
    assert first == second and len(first) == 1
    agent.acknowledge("vm1", first)
    assert agent.read_scheduled_events("vm1", 3_000) == []


def test_unacknowledged_event_listed_past_effective_time():
    _, agent = build()
    agent.deliver(notice("vm1", 0, 30_000), 0)
    late = agent.read_scheduled_events("vm1", 45_000)
    assert len(late) == 1 and late[0].effective_at_ms == 30_000


def test_events_sorted_by_effective_time():
    _, agent = build()
    agent.deliver(notice("vm1", 0, 90_000), 0)
    agent.deliver(notice("vm1", 0, 40_000), 0)
    agent.deliver(notice("vm1", 0, 40_000, kind=NotificationKind.SCALE_DOWN), 0)
    kinds = [(e.effective_at_ms, e.kind) for e in agent.read_scheduled_events("vm1", 0)]
    assert kinds == [
        (40_000, NotificationKind.PREEMPTION),
        (40_000, NotificationKind.SCALE_DOWN),
        (90_000, NotificationKind.PREEMPTION),
    ]


def test_unknown_vm_raises():
    _, agent = build()
    with pytest.raises(UnknownVmError):
        agent.post_hint(prio("ghost", PreemptionPriority.LOW, 0))
    with pytest.raises(UnknownVmError):
        agent.read_scheduled_events("ghost", 0)
    with pytest.raises(UnknownVmError):
        agent.deliver(notice("ghost", 0, 30_000), 0)


def test_pump_routes_broker_notifications_to_mailboxes():
    broker, agent = build()
    broker.publish(
        "opt:spot_vms",
        "platform-notifications/east/s1/vm2",
        notice("vm2", 10_000, 40_000),
        10_000,
    )
    assert agent.pump(10_000) == 1
    events = agent.read_scheduled_events("vm2", 10_000)
    assert len(events) == 1 and events[0].vm_id == "vm2"


def test_detach_clears_mailbox_and_history():
    _, agent = build()
    agent.post_hint(prio("vm1", PreemptionPriority.LOW, 0))
    agent.collect(0)
    agent.detach_vm("vm1")
    with pytest.raises(UnknownVmError):
        agent.read_scheduled_events("vm1", 0)
    assert agent.vm_ids() == ["vm2"]


def test_config_defaults():
    cfg = AgentConfig()
    assert cfg.poll_interval_ms == 1000
    assert cfg.eviction_notice_ms == 30_000
