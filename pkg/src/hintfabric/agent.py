"""Per-server node agent.

Bridges in-VM mailboxes and the broker: collect() drains outgoing runtime
hints (flap-checked, then published under the owning workload's rate
budget), deliver() places platform notifications into VM mailboxes and
enforces the eviction notice floor. Scheduled events stay readable until
acknowledged, even past their effective time; the platform applies them
regardless of whether the workload looked.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from collections.abc import Iterable

from .broker import Broker, RateLimited, UnknownVmError
from .hints import (
    Decision,
    HintKind,
    HintRejection,
    NotificationKind,
    PlatformNotification,
    RuntimeHint,
    consistency_check,
)


class NoticeViolationError(ValueError):
    """A non-emergency eviction/preemption arrived with too little notice."""


@dataclasses.dataclass(frozen=True)
class AgentConfig:
    poll_interval_ms: int = 1000
    eviction_notice_ms: int = 30_000
    flap_limit: int = 4
    flap_window_ms: int = 60_000


@dataclasses.dataclass
class _Mailbox:
    workload_id: str
    outgoing: deque[RuntimeHint] = dataclasses.field(default_factory=deque)
    incoming: list[tuple[int, PlatformNotification]] = dataclasses.field(default_factory=list)


@dataclasses.dataclass
class CollectReport:
    accepted: list[RuntimeHint] = dataclasses.field(default_factory=list)
    ignored: list[HintRejection] = dataclasses.field(default_factory=list)
    rate_limited: list[RuntimeHint] = dataclasses.field(default_factory=list)


_NOTICE_KINDS = (NotificationKind.EVICTION, NotificationKind.PREEMPTION)


class NodeAgent:
    def __init__(self, server_id: str, region_id: str, broker: Broker,
                 config: AgentConfig = AgentConfig()):
        self.server_id = server_id
        self.region_id = region_id
        self.broker = broker
        self.config = config
        self._mailboxes: dict[str, _Mailbox] = {}
        self._history: dict[tuple[str, HintKind], list[RuntimeHint]] = {}
        self._serial = 0
        self._subscription = broker.subscribe(
            f"platform-notifications/{region_id}/{server_id}/*"
        )

    # -- lifecycle ----------------------------------------------------------

    def attach_vm(self, vm_id: str, workload_id: str) -> None:
        self._mailboxes[vm_id] = _Mailbox(workload_id=workload_id)

    def detach_vm(self, vm_id: str) -> None:
        self._mailboxes.pop(vm_id, None)
        for key in [k for k in self._history if k[0] == vm_id]:
            del self._history[key]

    def vm_ids(self) -> list[str]:
        return sorted(self._mailboxes)

    # -- workload-facing side -------------------------------------------------

    def post_hint(self, hint: RuntimeHint) -> None:
        """Queue a runtime hint from inside the VM for the next collect."""
        if hint.vm_id not in self._mailboxes:
            raise UnknownVmError(hint.vm_id)
        self._mailboxes[hint.vm_id].outgoing.append(hint)

    def read_scheduled_events(self, vm_id: str, now_ms: int) -> list[PlatformNotification]:
        """Unacknowledged notifications, soonest effective first.

        Past-effective entries stay listed until acknowledged: a workload
        that missed its window still sees what happened.
        """
        box = self._mailboxes.get(vm_id)
        if box is None:
            raise UnknownVmError(vm_id)
        ordered = sorted(box.incoming, key=lambda sn: (sn[1].effective_at_ms, sn[0]))
        return [n for _, n in ordered]

    def acknowledge(self, vm_id: str, events: Iterable[PlatformNotification]) -> None:
        box = self._mailboxes.get(vm_id)
        if box is None:
            raise UnknownVmError(vm_id)
        for event in events:
            for i, (_, pending) in enumerate(box.incoming):
                if pending == event:
                    del box.incoming[i]
                    break

    # -- platform-facing side ---------------------------------------------------

    def collect(self, now_ms: int) -> CollectReport:
        """Drain mailboxes in vm-id order and publish accepted hints."""
        report = CollectReport()
        for vm_id in sorted(self._mailboxes):
            box = self._mailboxes[vm_id]
            while box.outgoing:
                hint = box.outgoing.popleft()
                key = (vm_id, hint.kind)
                history = self._history.setdefault(key, [])
                decision = consistency_check(
                    history, hint,
                    flap_limit=self.config.flap_limit,
                    window_ms=self.config.flap_window_ms,
                )
                if decision is Decision.IGNORE:
                    rejection = HintRejection(
                        vm_id=vm_id, kind=hint.kind,
                        reason="flapping suppressed", at_ms=now_ms,
                    )
                    report.ignored.append(rejection)
                    continue
                topic = f"runtime-hints/{self.region_id}/{self.server_id}/{vm_id}"
                outcome = self.broker.publish(
                    box.workload_id, topic, hint, timestamp_ms=now_ms
                )
                if isinstance(outcome, RateLimited):
                    report.rate_limited.append(hint)
                    continue
                history.append(hint)
                self._prune_history(key, hint.timestamp_ms)
                report.accepted.append(hint)
        return report

    def _prune_history(self, key: tuple[str, HintKind], now_ms: int) -> None:
        # keep the full flap window plus the latest value for flip detection
        history = self._history[key]
        cutoff = now_ms - 2 * self.config.flap_window_ms
        keep = [h for h in history[:-1] if h.timestamp_ms > cutoff]
        keep.append(history[-1])
        self._history[key] = keep

    def deliver(self, notification: PlatformNotification, now_ms: int | None = None) -> None:
        """Place one notification into its VM mailbox, checking the notice floor."""
        box = self._mailboxes.get(notification.vm_id)
        if box is None:
            raise UnknownVmError(notification.vm_id)
        if (
            notification.kind in _NOTICE_KINDS
            and not notification.emergency
            and notification.notice_ms < self.config.eviction_notice_ms
        ):
            raise NoticeViolationError(
                f"{notification.kind} for {notification.vm_id} gives "
                f"{notification.notice_ms} ms notice, "
                f"need >= {self.config.eviction_notice_ms} ms"
            )
        box.incoming.append((self._serial, notification))
        self._serial += 1

    def pump(self, now_ms: int) -> int:
        """Deliver notifications published for this server's VMs."""
        delivered = 0
        for env in self._subscription.poll():
            payload = env.payload
            if isinstance(payload, PlatformNotification) and payload.vm_id in self._mailboxes:
                self.deliver(payload, now_ms)
                delivered += 1
        return delivered
