"""Deterministic discrete-event scheduler on an integer-millisecond logical clock.

Every agent in a run (broker deliveries, robots, operator, assistant) is driven
from one timer heap, so identical inputs replay to identical event orders.
Ties at the same logical time fire in scheduling order.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Generator


class Timer:
    """Handle for a scheduled callback; cancellation is lazy."""

    __slots__ = ("at_ms", "fn", "cancelled")

    def __init__(self, at_ms: int, fn: Callable[[], None]):
        self.at_ms = at_ms
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Scheduler:
    def __init__(self, start_ms: int = 0):
        self._now_ms = start_ms
        self._heap: list[tuple[int, int, int, Timer]] = []
        self._seq = 0  # tie-break: insertion order at equal (time, band)

    @property
    def now_ms(self) -> int:
        return self._now_ms

    def call_at(self, at_ms: int, fn: Callable[[], None], late: bool = False) -> Timer:
        """Schedule fn at a logical time.

        `late` places the timer after every normally-scheduled event of the
        same instant; replayed console frames use it to land exactly where
        live frame injection did (after the instant's simulation work).
        """
        if at_ms < self._now_ms:
            raise ValueError(f"cannot schedule in the past: {at_ms} < {self._now_ms}")
        timer = Timer(at_ms, fn)
        heapq.heappush(self._heap, (at_ms, 1 if late else 0, self._seq, timer))
        self._seq += 1
        return timer

    def call_in(self, delay_ms: int, fn: Callable[[], None]) -> Timer:
        if delay_ms < 0:
            raise ValueError("negative delay")
        return self.call_at(self._now_ms + delay_ms, fn)

    def peek_ms(self) -> int | None:
        """Time of the next pending timer, skipping cancelled ones."""
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        """Fire the next timer; returns False when the heap is empty."""
        while self._heap:
            at_ms, _, _, timer = heapq.heappop(self._heap)
            if timer.cancelled:
                continue
            self._now_ms = at_ms
            timer.fn()
            return True
        return False

    def run_until(self, t_ms: int) -> None:
        """Fire everything scheduled at or before t_ms, then set the clock to t_ms."""
        while True:
            nxt = self.peek_ms()
            if nxt is None or nxt > t_ms:
                break
            self.step()
        self._now_ms = max(self._now_ms, t_ms)

    def run_until_idle(self, limit_ms: int | None = None) -> None:
        while True:
            nxt = self.peek_ms()
            if nxt is None:
                return
            if limit_ms is not None and nxt > limit_ms:
                self._now_ms = limit_ms
                return
            self.step()


class Trigger:
    """One-shot condition that wakes waiting processes through the scheduler."""

    def __init__(self, scheduler: Scheduler):
        self._scheduler = scheduler
        self._fired = False
        self._waiters: list[Callable[[], None]] = []

    @property
    def fired(self) -> bool:
        return self._fired

    def fire(self) -> None:
        if self._fired:
            return
        self._fired = True
        waiters, self._waiters = self._waiters, []
        for fn in waiters:
            self._scheduler.call_in(0, fn)

    def on_fire(self, fn: Callable[[], None]) -> None:
        if self._fired:
            self._scheduler.call_in(0, fn)
        else:
            self._waiters.append(fn)


@dataclass(frozen=True)
class Wait:
    """Yield from a process generator: pause for a duration."""

    delay_ms: int


@dataclass(frozen=True)
class WaitFor:
    """Yield from a process generator: pause until a trigger fires."""

    trigger: Trigger


ProcessGen = Generator["Wait | WaitFor", None, None]


@dataclass
class Process:
    """Drives a generator that yields Wait/WaitFor steps on the scheduler."""

    scheduler: Scheduler
    gen: ProcessGen
    done: Trigger = field(init=False)

    def __post_init__(self):
        self.done = Trigger(self.scheduler)

    def start(self) -> "Process":
        self.scheduler.call_in(0, self._advance)
        return self

    def _advance(self) -> None:
        try:
            step = next(self.gen)
        except StopIteration:
            self.done.fire()
            return
        if isinstance(step, Wait):
            self.scheduler.call_in(step.delay_ms, self._advance)
        elif isinstance(step, WaitFor):
            step.trigger.on_fire(self._advance)
        else:
            raise TypeError(f"process yielded {step!r}, expected Wait or WaitFor")
