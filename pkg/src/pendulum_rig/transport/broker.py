"""Embedded pub/sub broker with per-channel fault injection.

QoS-0 semantics on exact-match topics: every active subscriber of a topic
receives each published payload once, in publish order, unless a configured
fault drops or delays it.  Publishers never block; each subscriber has a
bounded queue that drops its oldest entry on overflow and counts the loss.

Routing happens on the owning rig's scheduler, so delivery timing is part
of the same simulated timeline as physics and firmware cadences.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Dict, List, Optional, Tuple

from ..clock import PRIO_DELIVERY, Scheduler


@dataclass(frozen=True)
class ChannelFault:
    """Latency/jitter/drop model for one direction of traffic.

    Delivered messages are delayed by ``base_latency_ms`` plus a uniform
    draw from [0, jitter_ms]; ordering among delivered messages is
    preserved (a short draw never overtakes an earlier long one).
    """

    base_latency_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be >= 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must be in [0, 1)")


class _FaultLine:
    """Stateful applicator of a ChannelFault keeping FIFO order."""

    def __init__(self, fault: ChannelFault):
        fault.validate()
        self.fault = fault
        self.rng = random.Random(fault.seed)
        self.last_deadline = 0.0
        self.dropped = 0

    def schedule(self, now_ms: float) -> Optional[float]:
        """Delivery deadline for a message published now, or None if dropped."""
        f = self.fault
        if f.drop_prob > 0.0 and self.rng.random() < f.drop_prob:
            self.dropped += 1
            return None
        delay = f.base_latency_ms
        if f.jitter_ms > 0.0:
            delay += self.rng.uniform(0.0, f.jitter_ms)
        deadline = now_ms + delay
        if deadline < self.last_deadline:
            deadline = self.last_deadline
        self.last_deadline = deadline
        return deadline


class Subscriber:
    """Broker-side subscriber session with a bounded drop-oldest queue.

    ``sink`` (when given) is invoked after each enqueue and should drain
    the queue; in-process listeners consume synchronously while socket
    sessions hand off to a writer.
    """

    def __init__(self, capacity: int = 256, sink: Optional[Callable[["Subscriber"], None]] = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.queue: Deque[Tuple[str, bytes]] = deque()
        self.capacity = capacity
        self.overflow_dropped = 0
        self.delivered = 0
        self._sink = sink

    def offer(self, topic: str, payload: bytes) -> None:
        if len(self.queue) >= self.capacity:
            self.queue.popleft()
            self.overflow_dropped += 1
        self.queue.append((topic, payload))
        self.delivered += 1
        if self._sink is not None:
            self._sink(self)

    def drain(self) -> List[Tuple[str, bytes]]:
        out = list(self.queue)
        self.queue.clear()
        return out


class Broker:
    """Exact-topic router running on a scheduler."""

    def __init__(self, scheduler: Scheduler):
        self._sched = scheduler
        self._subs: Dict[str, List[Subscriber]] = {}
        self._faults: Dict[str, _FaultLine] = {}
        self.published = 0
        self.delivered = 0

    def subscribe(self, topic: str, sub: Subscriber) -> None:
        if not topic:
            raise ValueError("topic must be non-empty")
        subs = self._subs.setdefault(topic, [])
        if sub not in subs:
            subs.append(sub)

    def unsubscribe(self, topic: str, sub: Subscriber) -> None:
        subs = self._subs.get(topic)
        if subs and sub in subs:
            subs.remove(sub)

    def remove_subscriber(self, sub: Subscriber) -> None:
        """Drop every subscription of a disconnecting session."""
        for subs in self._subs.values():
            if sub in subs:
                subs.remove(sub)

    def set_fault(self, topic: str, fault: Optional[ChannelFault]) -> None:
        """Install (or clear) the fault model applied to one topic's deliveries."""
        if fault is None:
            self._faults.pop(topic, None)
        else:
            self._faults[topic] = _FaultLine(fault)

    def fault_dropped(self, topic: str) -> int:
        line = self._faults.get(topic)
        return line.dropped if line else 0

    def publish(self, topic: str, payload: bytes) -> None:
        """Route to current subscribers; delivery lands as a scheduler event."""
        self.published += 1
        subs = self._subs.get(topic)
        if not subs:
            return
        line = self._faults.get(topic)
        if line is None:
            deadline = self._sched.now
        else:
            maybe = line.schedule(self._sched.now)
            if maybe is None:
                return
            deadline = maybe
        targets = list(subs)

        def deliver() -> None:
            for sub in targets:
                sub.offer(topic, payload)
                self.delivered += 1

        self._sched.call_at(deadline, deliver, PRIO_DELIVERY)
