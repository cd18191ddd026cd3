"""Broker: topics, pub/sub, rate limiting, store, log replay, aggregation."""

import threading

import pytest

from hintfabric import (
    HintKind,
    HintSet,
    NotificationKind,
    PlatformNotification,
    PreemptionPriority,
    RuntimeHint,
    validate,
)
from hintfabric.broker import (
    Broker,
    CorruptRecord,
    HintAggregate,
    MalformedPayloadError,
    MalformedTopicError,
    RateLimited,
    RateLimitPolicy,
    Scope,
    UnknownVmError,
    UnknownWorkloadError,
    topic_matches,
    validate_topic,
)


def rhint(vm, value, ts, kind=HintKind.PREEMPTION_PRIORITY):
    return RuntimeHint(vm_id=vm, kind=kind, value=value, timestamp_ms=ts)


def make_broker(**kw):
    return Broker(**kw)


def register_fleet(broker, workload="web", n=3, server="s1", rack="r1",
                   region="east", cores=8, hints=None):
    ids = [f"{workload}-vm{i}" for i in range(n)]
    for vm in ids:
        broker.register_vm(vm, server, rack, region, workload, cores)
    broker.set_deployment_hints(workload, hints or {"preemptibility_pct": 50}, ids)
    return ids


# ---------------------------------------------------------------------------
# topics


def test_topic_validation():
    validate_topic("runtime-hints/east/s1/vm1")
    with pytest.raises(MalformedTopicError):
        validate_topic("bogus-namespace/a")
    with pytest.raises(MalformedTopicError):
        validate_topic("runtime-hints//vm1")
    with pytest.raises(MalformedTopicError):
        validate_topic("runtime-hints/a b")
    with pytest.raises(MalformedTopicError):
        validate_topic("runtime-hints/" + "x" * 300)
    with pytest.raises(MalformedTopicError):
        validate_topic("runtime-hints/*/vm1", allow_wildcard=True)  # not trailing
    validate_topic("runtime-hints/east/*", allow_wildcard=True)


def test_topic_matching():
    assert topic_matches("runtime-hints/east/*", "runtime-hints/east/s1/vm1")
    assert topic_matches("runtime-hints/east/*", "runtime-hints/east/s1")
    assert not topic_matches("runtime-hints/east/*", "runtime-hints/east")
    assert not topic_matches("runtime-hints/east/*", "runtime-hints/west/s1")
    assert topic_matches("runtime-hints/east/s1", "runtime-hints/east/s1")
    assert not topic_matches("runtime-hints/east/s1", "runtime-hints/east/s1/vm1")


# ---------------------------------------------------------------------------
# pub/sub basics


def test_publish_assigns_gapless_per_topic_sequences():
    b = make_broker()
    register_fleet(b)
    topic_a = "runtime-hints/east/s1/web-vm0"
    topic_b = "runtime-hints/east/s1/web-vm1"
    seqs_a = [b.publish("web", topic_a, rhint("web-vm0", PreemptionPriority.LOW, t), t)
              for t in range(4)]
    seqs_b = [b.publish("web", topic_b, rhint("web-vm1", PreemptionPriority.HIGH, t), t)
              for t in range(3)]
    assert seqs_a == [0, 1, 2, 3]
    assert seqs_b == [0, 1, 2]


def test_subscription_no_retroactive_delivery_and_fifo():
    b = make_broker()
    register_fleet(b)
    topic = "runtime-hints/east/s1/web-vm0"
    b.publish("web", topic, rhint("web-vm0", PreemptionPriority.LOW, 0), 0)
    handle = b.subscribe("runtime-hints/east/*")
    values = [PreemptionPriority.HIGH, PreemptionPriority.LOW, PreemptionPriority.HIGH]
    for i, v in enumerate(values, start=1):
        b.publish("web", topic, rhint("web-vm0", v, i), i)
    got = handle.poll()
    assert [e.payload.value for e in got] == values  # the pre-subscribe event absent
    assert [e.sequence for e in got] == [1, 2, 3]
    assert handle.poll() == []


def test_fanout_to_multiple_subscribers():
    b = make_broker()
    register_fleet(b)
    h1 = b.subscribe("runtime-hints/east/*")
    h2 = b.subscribe("runtime-hints/east/s1/web-vm0")
    h3 = b.subscribe("platform-notifications/east/*")
    b.publish("web", "runtime-hints/east/s1/web-vm0",
              rhint("web-vm0", PreemptionPriority.LOW, 5), 5)
    assert len(h1.poll()) == 1
    assert len(h2.poll()) == 1
    assert h3.poll() == []


def test_closed_subscription_gets_nothing():
    b = make_broker()
    register_fleet(b)
    h = b.subscribe("runtime-hints/east/*")
    h.close()
    b.publish("web", "runtime-hints/east/s1/web-vm0",
              rhint("web-vm0", PreemptionPriority.LOW, 1), 1)
    assert h.poll() == []


def test_malformed_payload_rejected():
    b = make_broker()
    with pytest.raises(MalformedPayloadError):
        b.publish("web", "optimization-events/x", {"fn": lambda: 1}, 0)
    with pytest.raises(MalformedPayloadError):
        b.publish("web", "optimization-events/x", object(), 0)


# ---------------------------------------------------------------------------
# rate limiting (token bucket, burst == rate)


def token_bucket_oracle(rate, timestamps_ms):
    """Independent bucket: capacity == rate, continuous refill."""
    tokens, last, results = float(rate), None, []
    for t in timestamps_ms:
        if last is not None and t > last:
            tokens = min(float(rate), tokens + (t - last) * rate / 1000.0)
        last = t if last is None else max(last, t)
        if tokens >= 1 - 1e-9:
            tokens -= 1
            results.append(True)
        else:
            results.append(False)
    return results


def test_eleven_in_one_second_at_limit_ten():
    b = make_broker(default_policy=RateLimitPolicy(events_per_second=10))
    register_fleet(b)
    topic = "runtime-hints/east/s1/web-vm0"
    stamps = [0] * 11
    outcomes = [
        b.publish("web", topic, rhint("web-vm0", PreemptionPriority.LOW, t), t)
        for t in stamps
    ]
    accepted = [o for o in outcomes if not isinstance(o, RateLimited)]
    limited = [o for o in outcomes if isinstance(o, RateLimited)]
    assert len(accepted) == 10 and len(limited) == 1
    assert limited[0].publisher_id == "web"
    assert b.rate_limited_count == 1
    assert token_bucket_oracle(10, stamps) == [not isinstance(o, RateLimited) for o in outcomes]


def test_bucket_refills_with_logical_time():
    b = make_broker(default_policy=RateLimitPolicy(events_per_second=2))
    register_fleet(b)
    topic = "runtime-hints/east/s1/web-vm0"
    stamps = [0, 0, 0, 400, 1000, 1000, 1000]
    outcomes = [
        not isinstance(
            b.publish("web", topic, rhint("web-vm0", PreemptionPriority.LOW, t), t),
            RateLimited,
        )
        for t in stamps
    ]
    assert outcomes == token_bucket_oracle(2, stamps)


def test_per_publisher_isolation():
    b = make_broker(default_policy=RateLimitPolicy(events_per_second=5))
    register_fleet(b, workload="web")
    register_fleet(b, workload="db", server="s2")
    quiet_topic = "runtime-hints/east/s2/db-vm0"
    noisy_topic = "runtime-hints/east/s1/web-vm0"

    def run(flood: bool):
        bb = make_broker(default_policy=RateLimitPolicy(events_per_second=5))
        register_fleet(bb, workload="web")
        register_fleet(bb, workload="db", server="s2")
        accepted = []
        for t in range(0, 3000, 100):
            if flood:
                for _ in range(50):
                    bb.publish("web", noisy_topic, rhint("web-vm0", PreemptionPriority.LOW, t), t)
            if t % 500 == 0:
                r = bb.publish("db", quiet_topic, rhint("db-vm0", PreemptionPriority.HIGH, t), t)
                accepted.append((t, r))
        return accepted

    assert run(flood=False) == run(flood=True)


# ---------------------------------------------------------------------------
# store semantics


def test_set_then_get_deployment_hints():
    b = make_broker()
    ids = register_fleet(b, hints={"preemptibility_pct": 80, "delay_tolerance_ms": 100})
    stored = b.deployment_hints("web")
    assert stored == validate({"preemptibility_pct": 80, "delay_tolerance_ms": 100})
    eff = b.get(Scope.VM, ids[0])
    assert eff.effective_set().preemptibility_pct == 80


def test_retag_latest_wins_log_retains_both():
    b = make_broker()
    register_fleet(b, hints={"preemptibility_pct": 80})
    b.set_deployment_hints("web", {"preemptibility_pct": 10})
    assert b.deployment_hints("web").preemptibility_pct == 10
    replayed = Broker.replay(b.log_bytes())
    deploy_events = [
        1 for t, n in replayed.sequences.items() if t.endswith("/tags") for _ in range(n)
    ]
    assert sum(deploy_events) == 2


def test_unknown_vm_rejected_atomically():
    b = make_broker()
    b.register_vm("vm-a", "s1", "r1", "east", "web", 4)
    with pytest.raises(UnknownVmError):
        b.set_deployment_hints("web", {"scale_out_in": True}, ["vm-a", "ghost"])
    # nothing applied
    with pytest.raises(UnknownWorkloadError):
        b.deployment_hints("web")


def test_runtime_hint_updates_effective_view():
    b = make_broker()
    ids = register_fleet(b, hints={"preemptibility_pct": 60})
    b.publish("web", f"runtime-hints/east/s1/{ids[1]}",
              rhint(ids[1], 0, 50, kind=HintKind.PREEMPTIBILITY_PCT), 50)
    assert b.get(Scope.VM, ids[1]).effective_set().preemptibility_pct == 0
    assert b.get(Scope.VM, ids[0]).effective_set().preemptibility_pct == 60


def test_get_unknown_vm_raises():
    b = make_broker()
    with pytest.raises(UnknownVmError):
        b.get(Scope.VM, "nope")


# ---------------------------------------------------------------------------
# aggregation


def build_topology(b):
    # two servers in one rack, one more in another rack, all in one region
    layout = {
        "s1": ("r1", ["vm1", "vm2"]),
        "s2": ("r1", ["vm3"]),
        "s3": ("r2", ["vm4", "vm5"]),
    }
    for server, (rack, vms) in layout.items():
        for vm in vms:
            b.register_vm(vm, server, rack, "east", "fleet", 8)
    b.set_deployment_hints("fleet", {"preemptibility_pct": 100, "availability_nines": 3})
    return layout


def test_workload_aggregate_counts_preemptible_cores():
    b = make_broker()
    n = 15
    for i in range(n):
        b.register_vm(f"w-vm{i}", f"s{i % 3}", "r1", "east", "workers", 8)
    b.set_deployment_hints("workers", {"preemptibility_pct": 100})
    agg = b.get(Scope.WORKLOAD, "workers")
    assert agg.vm_count == 15
    assert agg.preemptible_cores == 120
    assert agg.min_availability_nines == 5


def test_rack_aggregate_equals_merge_of_servers():
    b = make_broker()
    build_topology(b)
    b.publish("fleet", "runtime-hints/east/s1/vm1",
              rhint("vm1", PreemptionPriority.HIGH, 10), 10)
    rack = b.get(Scope.RACK, "r1")
    merged = b.get(Scope.SERVER, "s1").merge(b.get(Scope.SERVER, "s2"))
    assert rack == merged
    assert rack.vm_count == 3
    assert rack.priority_counts["high"] == 1
    region = b.get(Scope.REGION, "east")
    assert region == b.get(Scope.RACK, "r1").merge(b.get(Scope.RACK, "r2"))


def test_empty_aggregate_merge_identity():
    empty = HintAggregate()
    assert empty.merge(empty) == HintAggregate()
    assert empty.min_availability_nines is None


# ---------------------------------------------------------------------------
# log + replay


def fill_broker(b):
    ids = register_fleet(b, hints={"preemptibility_pct": 75, "scale_up_down": True})
    for t in range(5):
        b.publish("web", f"runtime-hints/east/s1/{ids[t % 3]}",
                  rhint(ids[t % 3], [PreemptionPriority.LOW, PreemptionPriority.HIGH][t % 2], t * 1000), t * 1000)
    b.publish(
        "opt:spot_vms",
        f"platform-notifications/east/s1/{ids[0]}",
        PlatformNotification(
            kind=NotificationKind.PREEMPTION, vm_id=ids[0],
            issued_at_ms=5000, effective_at_ms=35000,
        ),
        5000,
    )
    return ids


def test_replay_reconstructs_store_exactly():
    b = make_broker()
    fill_broker(b)
    result = Broker.replay(b.log_bytes())
    assert result.error is None
    assert result.store.state_digest() == b.store.state_digest()
    assert result.sequences == b.sequences()


def test_replay_prefix_matches_prefix_state():
    b = make_broker()
    register_fleet(b)
    log_after_setup = b.log_bytes()
    digest_after_setup = b.store.state_digest()
    b.publish("web", "runtime-hints/east/s1/web-vm0",
              rhint("web-vm0", PreemptionPriority.LOW, 9), 9)
    replayed = Broker.replay(log_after_setup)
    assert replayed.error is None
    assert replayed.store.state_digest() == digest_after_setup


def test_truncated_log_stops_at_last_good_record():
    b = make_broker()
    fill_broker(b)
    log = b.log_bytes()
    cut = log[: len(log) - 7]
    result = Broker.replay(cut)
    assert isinstance(result.error, CorruptRecord)
    assert result.error.reason in ("truncated record", "truncated header")
    full = Broker.replay(log)
    assert result.records_applied == full.records_applied - 1


def test_corrupt_byte_detected_with_offset():
    b = make_broker()
    fill_broker(b)
    log = bytearray(b.log_bytes())
    # flip one byte inside the last record's body
    log[-3] ^= 0xFF
    result = Broker.replay(bytes(log))
    assert isinstance(result.error, CorruptRecord)
    assert result.error.reason == "checksum mismatch"
    assert 0 <= result.error.offset < len(log)


def test_empty_log_is_empty_store():
    result = Broker.replay(b"")
    assert result.error is None
    assert result.records_applied == 0
    assert result.store.state_digest() == Broker().store.state_digest()


def test_concurrent_publishers_keep_invariants():
    b = make_broker(default_policy=RateLimitPolicy(events_per_second=100000))
    register_fleet(b, n=8)
    errors = []

    def worker(wid):
        try:
            for t in range(200):
                b.publish(f"pub{wid}", f"runtime-hints/east/s1/web-vm{wid}",
                          rhint(f"web-vm{wid}", PreemptionPriority.LOW, t), t)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    seqs = b.sequences()
    for i in range(4):
        assert seqs[f"runtime-hints/east/s1/web-vm{i}"] == 200
    replayed = Broker.replay(b.log_bytes())
    assert replayed.error is None
    assert replayed.store.state_digest() == b.store.state_digest()
