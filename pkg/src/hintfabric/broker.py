"""Hint broker: pub/sub fabric, hint store, and append-only event log.

Topics are slash-separated paths whose first segment is the namespace
(deployment-hints | runtime-hints | platform-notifications |
optimization-events). Filters may end in a trailing ``*`` that matches
one or more remaining segments. Every accepted event gets a gapless
per-topic sequence number, is appended to the binary log, folded into the
hint store, and fanned out to live subscriptions (delivery starts at
subscription time; there is no retroactive delivery).

Publishers are token-bucket rate limited per (publisher, namespace) with
bucket capacity equal to the per-second budget, so one publisher can
never starve another.

The log is the source of truth: replaying it reconstructs the store
exactly (registration and deployment are logged events too). Records are
little-endian ``[u32 length][u32 crc32][payload]``.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import threading
import zlib
from collections import deque
from collections.abc import Mapping
from enum import Enum
from typing import Any

from .hints import (
    EffectiveHints,
    HintKind,
    HintSet,
    HintSource,
    NotificationKind,
    PlatformNotification,
    PreemptionPriority,
    RuntimeHint,
    ScalePreference,
    merge,
    validate,
)
from .ids import OptimizationId

NAMESPACES = (
    "deployment-hints",
    "runtime-hints",
    "platform-notifications",
    "optimization-events",
)

MAX_TOPIC_BYTES = 256
_RECORD_HEADER = struct.Struct("<II")
PLATFORM_PUBLISHER = "platform"


class MalformedTopicError(ValueError):
    pass


class MalformedPayloadError(ValueError):
    pass


class UnknownVmError(KeyError):
    pass


class UnknownWorkloadError(KeyError):
    pass


def validate_topic(topic: str, allow_wildcard: bool = False) -> list[str]:
    if not isinstance(topic, str) or not topic:
        raise MalformedTopicError("topic must be a non-empty string")
    if len(topic.encode("utf-8")) > MAX_TOPIC_BYTES:
        raise MalformedTopicError(f"topic longer than {MAX_TOPIC_BYTES} bytes")
    parts = topic.split("/")
    if parts[0] not in NAMESPACES:
        raise MalformedTopicError(f"unknown namespace {parts[0]!r}")
    for i, part in enumerate(parts):
        if not part:
            raise MalformedTopicError("empty topic segment")
        if any(ch.isspace() for ch in part):
            raise MalformedTopicError("whitespace in topic segment")
        if "*" in part:
            if not (allow_wildcard and i == len(parts) - 1 and part == "*"):
                raise MalformedTopicError("'*' only allowed as trailing filter segment")
    return parts


def topic_matches(filter_: str, topic: str) -> bool:
    """True when filter (exact or trailing-*) matches the concrete topic."""
    fparts = filter_.split("/")
    tparts = topic.split("/")
    if fparts[-1] == "*":
        prefix = fparts[:-1]
        return len(tparts) > len(prefix) and tparts[: len(prefix)] == prefix
    return fparts == tparts


# ---------------------------------------------------------------------------
# Wire codec


def _encode_value(v: Any) -> Any:
    if isinstance(v, Enum):
        return v.value
    return v


def _payload_to_obj(payload: Any) -> dict[str, Any]:
    if isinstance(payload, RuntimeHint):
        return {
            "type": "runtime_hint",
            "vm_id": payload.vm_id,
            "kind": payload.kind.value,
            "value": _encode_value(payload.value),
            "timestamp_ms": payload.timestamp_ms,
            "source": payload.source.value,
        }
    if isinstance(payload, PlatformNotification):
        return {
            "type": "notification",
            "kind": payload.kind.value,
            "vm_id": payload.vm_id,
            "issued_at_ms": payload.issued_at_ms,
            "effective_at_ms": payload.effective_at_ms,
            "payload": dict(payload.payload),
            "emergency": payload.emergency,
            "optimization": payload.optimization.value if payload.optimization else None,
        }
    if isinstance(payload, Mapping):
        obj = dict(payload)
        obj.setdefault("type", "event")
        return obj
    raise MalformedPayloadError(f"unsupported payload type {type(payload).__name__}")


_PRIORITY_KINDS = {HintKind.PREEMPTION_PRIORITY: PreemptionPriority,
                   HintKind.SCALE_PREFERENCE: ScalePreference}


def _obj_to_payload(obj: Mapping[str, Any]) -> Any:
    t = obj.get("type")
    if t == "runtime_hint":
        kind = HintKind(obj["kind"])
        value = obj["value"]
        enum_type = _PRIORITY_KINDS.get(kind)
        if enum_type is not None:
            value = enum_type(value)
        return RuntimeHint(
            vm_id=obj["vm_id"],
            kind=kind,
            value=value,
            timestamp_ms=obj["timestamp_ms"],
            source=HintSource(obj["source"]),
        )
    if t == "notification":
        return PlatformNotification(
            kind=NotificationKind(obj["kind"]),
            vm_id=obj["vm_id"],
            issued_at_ms=obj["issued_at_ms"],
            effective_at_ms=obj["effective_at_ms"],
            payload=obj.get("payload", {}),
            emergency=obj.get("emergency", False),
            optimization=OptimizationId(obj["optimization"]) if obj.get("optimization") else None,
        )
    return dict(obj)


@dataclasses.dataclass(frozen=True)
class EventEnvelope:
    topic: str
    sequence: int
    publisher_id: str
    timestamp_ms: int
    payload: Any

    @property
    def namespace(self) -> str:
        return self.topic.split("/", 1)[0]

    def to_bytes(self) -> bytes:
        obj = {
            "topic": self.topic,
            "seq": self.sequence,
            "pub": self.publisher_id,
            "ts": self.timestamp_ms,
            "payload": _payload_to_obj(self.payload),
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "EventEnvelope":
        obj = json.loads(data.decode("utf-8"))
        return cls(
            topic=obj["topic"],
            sequence=obj["seq"],
            publisher_id=obj["pub"],
            timestamp_ms=obj["ts"],
            payload=_obj_to_payload(obj["payload"]),
        )


@dataclasses.dataclass(frozen=True)
class RateLimited:
    """Returned (not raised) when a publish exceeds the publisher budget."""

    publisher_id: str
    namespace: str
    topic: str


@dataclasses.dataclass(frozen=True)
class CorruptRecord:
    offset: int
    reason: str


@dataclasses.dataclass(frozen=True)
class RateLimitPolicy:
    events_per_second: float = 200.0

    @property
    def burst(self) -> float:
        return self.events_per_second


class _TokenBucket:
    __slots__ = ("rate", "tokens", "capacity", "last_ms")

    def __init__(self, policy: RateLimitPolicy):
        self.rate = policy.events_per_second
        self.capacity = policy.burst
        self.tokens = policy.burst
        self.last_ms = None

    def try_take(self, now_ms: int) -> bool:
        if self.last_ms is not None and now_ms > self.last_ms:
            self.tokens = min(
                self.capacity, self.tokens + (now_ms - self.last_ms) / 1000.0 * self.rate
            )
        self.last_ms = now_ms if self.last_ms is None else max(self.last_ms, now_ms)
        if self.tokens >= 1.0 - 1e-9:
            self.tokens -= 1.0
            return True
        return False


# ---------------------------------------------------------------------------
# Store


@dataclasses.dataclass(frozen=True)
class VmMeta:
    vm_id: str
    server_id: str
    rack_id: str
    region_id: str
    workload_id: str
    cores: int


@dataclasses.dataclass
class HintAggregate:
    """Summary of effective hints over a set of VMs; merge is associative."""

    vm_count: int = 0
    cores: int = 0
    priority_counts: dict[str, int] = dataclasses.field(
        default_factory=lambda: {"low": 0, "normal": 0, "high": 0}
    )
    scale_pref_counts: dict[str, int] = dataclasses.field(
        default_factory=lambda: {"prefer_grow": 0, "neutral": 0, "prefer_shrink": 0}
    )
    preemptible_vms: int = 0
    preemptible_cores: int = 0
    min_availability_nines: int | None = None

    def add_vm(self, meta: VmMeta, eff: EffectiveHints,
               preemptible_threshold: int = 20) -> None:
        self.vm_count += 1
        self.cores += meta.cores
        self.priority_counts[eff.preemption_priority.value] += 1
        self.scale_pref_counts[eff.scale_preference.value] += 1
        hs = eff.effective_set()
        if hs.preemptibility_pct >= preemptible_threshold:
            self.preemptible_vms += 1
            self.preemptible_cores += meta.cores
        nines = hs.availability_nines
        if self.min_availability_nines is None or nines < self.min_availability_nines:
            self.min_availability_nines = nines

    def merge(self, other: "HintAggregate") -> "HintAggregate":
        out = HintAggregate(
            vm_count=self.vm_count + other.vm_count,
            cores=self.cores + other.cores,
            priority_counts={
                k: self.priority_counts[k] + other.priority_counts[k]
                for k in self.priority_counts
            },
            scale_pref_counts={
                k: self.scale_pref_counts[k] + other.scale_pref_counts[k]
                for k in self.scale_pref_counts
            },
            preemptible_vms=self.preemptible_vms + other.preemptible_vms,
            preemptible_cores=self.preemptible_cores + other.preemptible_cores,
        )
        mins = [
            m
            for m in (self.min_availability_nines, other.min_availability_nines)
            if m is not None
        ]
        out.min_availability_nines = min(mins) if mins else None
        return out


class Scope(str, Enum):
    VM = "vm"
    WORKLOAD = "workload"
    SERVER = "server"
    RACK = "rack"
    REGION = "region"

    def __str__(self) -> str:
        return self.value


class HintStore:
    """Latest hint state; a pure fold over the accepted-event log."""

    def __init__(self) -> None:
        self.deployment: dict[str, HintSet] = {}
        self.vm_meta: dict[str, VmMeta] = {}
        self.vm_hints: dict[str, EffectiveHints] = {}

    def apply(self, env: EventEnvelope) -> None:
        payload = env.payload
        if isinstance(payload, RuntimeHint):
            cur = self.vm_hints.get(payload.vm_id)
            if cur is None:
                meta = self.vm_meta.get(payload.vm_id)
                base = self.deployment.get(meta.workload_id) if meta else None
                cur = EffectiveHints(base=base if base is not None else HintSet())
            self.vm_hints[payload.vm_id] = merge(cur, [payload])
            return
        if isinstance(payload, Mapping):
            t = payload.get("type")
            if t == "register_vm":
                meta = VmMeta(
                    vm_id=payload["vm_id"],
                    server_id=payload["server_id"],
                    rack_id=payload["rack_id"],
                    region_id=payload["region_id"],
                    workload_id=payload["workload_id"],
                    cores=payload["cores"],
                )
                self.vm_meta[meta.vm_id] = meta
                base = self.deployment.get(meta.workload_id, HintSet())
                self.vm_hints.setdefault(meta.vm_id, EffectiveHints(base=base))
            elif t == "unregister_vm":
                self.vm_meta.pop(payload["vm_id"], None)
                self.vm_hints.pop(payload["vm_id"], None)
            elif t == "deployment":
                hints = validate(payload["hints"])
                wid = payload["workload_id"]
                self.deployment[wid] = hints
                for vm_id, meta in self.vm_meta.items():
                    if meta.workload_id != wid:
                        continue
                    cur = self.vm_hints.get(vm_id)
                    if cur is None:
                        self.vm_hints[vm_id] = EffectiveHints(base=hints)
                    else:
                        # rebase: runtime overrides survive a re-tag
                        self.vm_hints[vm_id] = dataclasses.replace(cur, base=hints)

    def effective(self, vm_id: str) -> EffectiveHints:
        if vm_id not in self.vm_hints:
            raise UnknownVmError(vm_id)
        return self.vm_hints[vm_id]

    def vms_of(self, scope: Scope, entity_id: str) -> list[str]:
        field = {
            Scope.WORKLOAD: "workload_id",
            Scope.SERVER: "server_id",
            Scope.RACK: "rack_id",
            Scope.REGION: "region_id",
        }[scope]
        return [
            vm_id
            for vm_id, meta in self.vm_meta.items()
            if getattr(meta, field) == entity_id
        ]

    def state_obj(self) -> dict[str, Any]:
        """Canonical plain-data snapshot used for digest comparison."""

        def eff_obj(eff: EffectiveHints) -> dict[str, Any]:
            return {
                "base": eff.base.as_dict(),
                "overrides": {k.value: _encode_value(v) for k, v in sorted(eff.overrides.items(), key=lambda kv: kv[0].value)},
                "stamps": {k.value: v for k, v in sorted(eff.stamps.items(), key=lambda kv: kv[0].value)},
                "priority": eff.preemption_priority.value,
                "scale_pref": eff.scale_preference.value,
            }

        return {
            "deployment": {w: h.as_dict() for w, h in sorted(self.deployment.items())},
            "vm_meta": {
                v: dataclasses.asdict(m) for v, m in sorted(self.vm_meta.items())
            },
            "vm_hints": {v: eff_obj(e) for v, e in sorted(self.vm_hints.items())},
        }

    def state_digest(self) -> str:
        blob = json.dumps(self.state_obj(), sort_keys=True, separators=(",", ":"))
        return f"{zlib.crc32(blob.encode('utf-8')):08x}:{len(blob)}"


# ---------------------------------------------------------------------------
# Broker


class SubscriptionHandle:
    def __init__(self, broker: "Broker", filter_: str, token: int):
        self._broker = broker
        self.filter = filter_
        self._token = token
        self._queue: deque[EventEnvelope] = deque()
        self.closed = False

    def poll(self, max_events: int | None = None) -> list[EventEnvelope]:
        out: list[EventEnvelope] = []
        with self._broker._lock:
            while self._queue and (max_events is None or len(out) < max_events):
                out.append(self._queue.popleft())
        return out

    def close(self) -> None:
        self._broker._unsubscribe(self)
        self.closed = True


@dataclasses.dataclass
class ReplayResult:
    store: HintStore
    sequences: dict[str, int]
    records_applied: int
    error: CorruptRecord | None = None


class Broker:
    """In-process hint broker; safe for threads, deterministic when driven
    single-threaded with a logical clock."""

    def __init__(
        self,
        default_policy: RateLimitPolicy = RateLimitPolicy(),
        policies: Mapping[str, RateLimitPolicy] | None = None,
    ):
        self._lock = threading.RLock()
        self.store = HintStore()
        self._log = bytearray()
        self._sequences: dict[str, int] = {}
        self._subs: dict[int, SubscriptionHandle] = {}
        self._next_token = 0
        self._default_policy = default_policy
        self._policies = dict(policies or {})
        self._buckets: dict[tuple[str, str], _TokenBucket] = {}
        self.rate_limited_count = 0
        self.published_count = 0

    # -- publishing ---------------------------------------------------------

    def _bucket(self, publisher_id: str, namespace: str) -> _TokenBucket:
        key = (publisher_id, namespace)
        bucket = self._buckets.get(key)
        if bucket is None:
            policy = self._policies.get(publisher_id, self._default_policy)
            bucket = _TokenBucket(policy)
            self._buckets[key] = bucket
        return bucket

    def publish(
        self,
        publisher_id: str,
        topic: str,
        payload: Any,
        timestamp_ms: int,
        _internal: bool = False,
    ) -> int | RateLimited:
        """Append one event; returns its per-topic sequence or RateLimited."""
        parts = validate_topic(topic)
        obj = _payload_to_obj(payload)  # validates payload shape early
        try:
            # prove serializability before spending rate-limit budget; the
            # normalized form is also what subscribers and replay will see
            normalized = json.loads(json.dumps(obj, sort_keys=True))
        except (TypeError, ValueError) as exc:
            raise MalformedPayloadError(str(exc)) from exc
        with self._lock:
            if not _internal:
                bucket = self._bucket(publisher_id, parts[0])
                if not bucket.try_take(timestamp_ms):
                    self.rate_limited_count += 1
                    return RateLimited(publisher_id, parts[0], topic)
            seq = self._sequences.get(topic, 0)
            self._sequences[topic] = seq + 1
            env = EventEnvelope(
                topic=topic,
                sequence=seq,
                publisher_id=publisher_id,
                timestamp_ms=timestamp_ms,
                payload=_obj_to_payload(normalized),
            )
            data = env.to_bytes()
            self._log += _RECORD_HEADER.pack(len(data), zlib.crc32(data))
            self._log += data
            self.store.apply(env)
            self.published_count += 1
            for handle in self._subs.values():
                if topic_matches(handle.filter, topic):
                    handle._queue.append(env)
            return seq

    # -- subscriptions ------------------------------------------------------

    def subscribe(self, filter_: str) -> SubscriptionHandle:
        validate_topic(filter_, allow_wildcard=True)
        with self._lock:
            token = self._next_token
            self._next_token += 1
            handle = SubscriptionHandle(self, filter_, token)
            self._subs[token] = handle
            return handle

    def _unsubscribe(self, handle: SubscriptionHandle) -> None:
        with self._lock:
            self._subs.pop(handle._token, None)

    # -- deployment / registry ----------------------------------------------

    def register_vm(
        self,
        vm_id: str,
        server_id: str,
        rack_id: str,
        region_id: str,
        workload_id: str,
        cores: int,
        timestamp_ms: int = 0,
    ) -> None:
        payload = {
            "type": "register_vm",
            "vm_id": vm_id,
            "server_id": server_id,
            "rack_id": rack_id,
            "region_id": region_id,
            "workload_id": workload_id,
            "cores": cores,
        }
        self.publish(
            PLATFORM_PUBLISHER,
            f"deployment-hints/{workload_id}/registry",
            payload,
            timestamp_ms,
            _internal=True,
        )

    def unregister_vm(self, vm_id: str, timestamp_ms: int = 0) -> None:
        with self._lock:
            meta = self.store.vm_meta.get(vm_id)
            if meta is None:
                raise UnknownVmError(vm_id)
            self.publish(
                PLATFORM_PUBLISHER,
                f"deployment-hints/{meta.workload_id}/registry",
                {"type": "unregister_vm", "vm_id": vm_id},
                timestamp_ms,
                _internal=True,
            )

    def set_deployment_hints(
        self,
        workload_id: str,
        hints: HintSet | Mapping[str, Any] | None,
        vm_ids: list[str] | None = None,
        timestamp_ms: int = 0,
    ) -> HintSet:
        """Tag a workload; atomic, all named VMs must exist and belong to it."""
        checked = hints if isinstance(hints, HintSet) else validate(hints)
        with self._lock:
            if vm_ids is not None:
                unknown = [
                    v
                    for v in vm_ids
                    if v not in self.store.vm_meta
                    or self.store.vm_meta[v].workload_id != workload_id
                ]
                if unknown:
                    raise UnknownVmError(
                        f"unknown or foreign VMs for {workload_id}: {unknown}"
                    )
            self.publish(
                PLATFORM_PUBLISHER,
                f"deployment-hints/{workload_id}/tags",
                {"type": "deployment", "workload_id": workload_id, "hints": checked.as_dict()},
                timestamp_ms,
                _internal=True,
            )
            return checked

    # -- queries --------------------------------------------------------------

    def get(self, scope: Scope, entity_id: str) -> EffectiveHints | HintAggregate:
        with self._lock:
            if scope is Scope.VM:
                return self.store.effective(entity_id)
            if scope is Scope.WORKLOAD and entity_id not in self.store.deployment \
                    and not self.store.vms_of(scope, entity_id):
                raise UnknownWorkloadError(entity_id)
            agg = HintAggregate()
            for vm_id in self.store.vms_of(scope, entity_id):
                agg.add_vm(self.store.vm_meta[vm_id], self.store.vm_hints[vm_id])
            return agg

    def deployment_hints(self, workload_id: str) -> HintSet:
        with self._lock:
            if workload_id not in self.store.deployment:
                raise UnknownWorkloadError(workload_id)
            return self.store.deployment[workload_id]

    # -- log ------------------------------------------------------------------

    def log_bytes(self) -> bytes:
        with self._lock:
            return bytes(self._log)

    def sequences(self) -> dict[str, int]:
        with self._lock:
            return dict(self._sequences)

    @staticmethod
    def replay(data: bytes) -> ReplayResult:
        """Fold a log back into a store, stopping at the first bad record."""
        store = HintStore()
        seqs: dict[str, int] = {}
        offset = 0
        applied = 0
        n = len(data)
        while offset < n:
            if offset + _RECORD_HEADER.size > n:
                return ReplayResult(store, seqs, applied,
                                    CorruptRecord(offset, "truncated header"))
            length, crc = _RECORD_HEADER.unpack_from(data, offset)
            start = offset + _RECORD_HEADER.size
            end = start + length
            if end > n:
                return ReplayResult(store, seqs, applied,
                                    CorruptRecord(offset, "truncated record"))
            body = data[start:end]
            if zlib.crc32(body) != crc:
                return ReplayResult(store, seqs, applied,
                                    CorruptRecord(offset, "checksum mismatch"))
            try:
                env = EventEnvelope.from_bytes(body)
            except Exception:
                return ReplayResult(store, seqs, applied,
                                    CorruptRecord(offset, "undecodable payload"))
            expected = seqs.get(env.topic, 0)
            if env.sequence != expected:
                return ReplayResult(store, seqs, applied,
                                    CorruptRecord(offset, "sequence gap"))
            seqs[env.topic] = expected + 1
            store.apply(env)
            applied += 1
            offset = end
        return ReplayResult(store, seqs, applied, None)
