"""Discrete-event engine with a microsecond integer clock.

Events dispatch in (time, insertion-sequence) order, so equal-time events are
FIFO. The whole engine is single-threaded; independent scenarios run in
independent engine instances.
"""

import heapq
from dataclasses import dataclass

# Clock cap: runs must stay below 2**62 microseconds.
TIME_CAP_US = 1 << 62

FRAME_ARRIVAL = "frame-arrival"
PERIODIC_TIMER = "periodic-timer"
APP_POLL = "app-poll"
DELAYED_ACK_TIMER = "delayed-ack-timer"
SCENARIO_ACTION = "scenario-action"

EVENT_KINDS = frozenset(
    {FRAME_ARRIVAL, PERIODIC_TIMER, APP_POLL, DELAYED_ACK_TIMER, SCENARIO_ACTION}
)


class SimError(Exception):
    pass


class SchedulingInPast(SimError):
    pass


class SimTimeOverflow(SimError):
    pass


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    target: str
    kind: str
    payload: object = None


class Engine:
    def __init__(self):
        self._now = 0
        self._next_seq = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._handlers: dict[str, object] = {}
        self.log: list[str] = []

    def now(self) -> int:
        return self._now

    def add_handler(self, target: str, handler) -> None:
        self._handlers[target] = handler

    def pending(self) -> int:
        return len(self._heap)

    def schedule(self, time: int, target: str, kind: str, payload=None) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if time < self._now:
            raise SchedulingInPast(f"event at t={time} but now={self._now}")
        if time > TIME_CAP_US:
            raise SimTimeOverflow(f"event at t={time} exceeds cap {TIME_CAP_US}")
        event = Event(time, self._next_seq, target, kind, payload)
        self._next_seq += 1
        heapq.heappush(self._heap, (time, event.seq, event))
        return event

    def run_until(self, t: int) -> int:
        """Dispatch every event with time <= t, then set the clock to t.

        Handlers may schedule further events; those also dispatch in this
        call when they fall at or before t. Returns the dispatch count.
        """
        if t > TIME_CAP_US:
            raise SimTimeOverflow(f"run_until {t} exceeds cap {TIME_CAP_US}")
        if t < self._now:
            raise ValueError(f"run_until into the past: t={t}, now={self._now}")
        dispatched = 0
        while self._heap and self._heap[0][0] <= t:
            _, _, event = heapq.heappop(self._heap)
            self._now = event.time
            self.log.append(f"{event.time} {event.seq} {event.target} {event.kind}")
            handler = self._handlers.get(event.target)
            if handler is None:
                raise KeyError(f"no handler registered for target {event.target!r}")
            handler(event)
            dispatched += 1
        self._now = t
        return dispatched
