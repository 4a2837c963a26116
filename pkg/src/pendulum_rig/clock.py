"""Discrete-event scheduler shared by every rig clock mode.

All rig-side activity (physics frames, firmware cadences, message
deliveries) is an event on one priority queue keyed by deadline in
simulated milliseconds.  In virtual mode the queue only drains when a
client asks for an advance, which is what makes wire-path tests and
differential runs bit-reproducible.  In real or accelerated mode a driver
loop advances the queue to track the wall clock.

Priorities order same-deadline events so the rig behaves like the physical
apparatus: a physics frame completes before anything reads or retargets
the state at that instant, message deliveries land before the acting tick
that would consume them, and observation sampling sees the settled state.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Callable, List, Optional, Tuple

# Same-deadline execution order.
PRIO_PHYSICS = 0   # integrate the frame ending at this instant
PRIO_DELIVERY = 1  # hand messages to inboxes
PRIO_ACT = 2       # firmware acting cadence
PRIO_OBS = 3       # firmware observation cadence
PRIO_MISC = 4


class Scheduler:
    """Priority queue of timed callbacks over a simulated millisecond clock."""

    def __init__(self, start_ms: float = 0.0):
        self._now = start_ms
        self._heap: List[Tuple[float, int, int, Callable[[], None]]] = []
        self._seq = itertools.count()

    @property
    def now(self) -> float:
        """Current simulated time in milliseconds."""
        return self._now

    def call_at(self, deadline_ms: float, fn: Callable[[], None], priority: int = PRIO_MISC) -> None:
        if deadline_ms < self._now:
            deadline_ms = self._now
        heapq.heappush(self._heap, (deadline_ms, priority, next(self._seq), fn))

    def call_in(self, delay_ms: float, fn: Callable[[], None], priority: int = PRIO_MISC) -> None:
        self.call_at(self._now + delay_ms, fn, priority)

    def every(
        self,
        interval_ms: float,
        fn: Callable[[], None],
        priority: int = PRIO_MISC,
        phase_ms: float = 0.0,
    ) -> Callable[[], None]:
        """Schedule ``fn`` on a fixed grid ``phase + k * interval``.

        Rescheduling uses the grid deadline, not the execution time, so the
        cadence never drifts.  Returns a cancel function.
        """
        cancelled = False

        def cancel() -> None:
            nonlocal cancelled
            cancelled = True

        def tick(deadline: float) -> None:
            if cancelled:
                return
            fn()
            self.call_at(deadline + interval_ms, lambda: tick(deadline + interval_ms), priority)

        first = self._now + phase_ms
        self.call_at(first, lambda: tick(first), priority)
        return cancel

    def next_deadline(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def advance(self, to_ms: float) -> int:
        """Run every event due at or before ``to_ms``; returns events run.

        Events scheduled while advancing are run too if they fall inside
        the window.  The clock ends exactly at ``to_ms``.
        """
        if to_ms < self._now:
            raise ValueError(f"cannot advance backwards: now={self._now}, to={to_ms}")
        count = 0
        while self._heap and self._heap[0][0] <= to_ms:
            deadline, _, _, fn = heapq.heappop(self._heap)
            self._now = deadline
            fn()
            count += 1
        self._now = to_ms
        return count

    def run_until_idle(self, limit_ms: float) -> None:
        """Drain all events up to a horizon (test helper)."""
        self.advance(limit_ms)
