"""
Simulation clock on top of simpy. One time unit is one microsecond.
"""
import logging
import math
from typing import Callable, Generator, Literal, Optional

import simpy
import simpy.rt

logger = logging.getLogger(__name__)

ClockMode = Literal["virtual", "realtime"]


class Clock:
    """
    Owns the simpy environment of a fabric.

    In virtual mode time moves only when events are processed or advance() is called. Realtime mode
    paces the same events against the wall clock and is meant for demonstrations.
    """

    def __init__(self, mode: ClockMode = "virtual"):
        self.mode = mode
        if mode == "realtime":
            self.env: simpy.Environment = simpy.rt.RealtimeEnvironment(factor=1e-6, strict=False)
        elif mode == "virtual":
            self.env = simpy.Environment()
        else:
            raise ValueError(f"unknown clock mode '{mode}'")

    @property
    def now_us(self) -> float:
        return self.env.now

    def seconds(self) -> float:
        """Current time in seconds, the unit tunnel sessions work in."""
        return self.env.now / 1e6

    def now_ms(self) -> float:
        return self.env.now / 1e3

    def advance(self, duration_us: float) -> int:
        """
        Process every event with a timestamp up to now + duration_us, in timestamp order
        (insertion order on ties), then move time to the target. Returns the events processed.
        """
        if duration_us < 0:
            raise ValueError("cannot advance by a negative duration")
        target = self.env.now + duration_us
        processed = 0
        while self.env.peek() <= target:
            self.env.step()
            processed += 1
        if target > self.env.now:
            self.env.run(until=target)
        return processed

    def run_until_idle(self, limit_us: Optional[float] = None) -> int:
        """Process events until none are pending, or until limit_us past now."""
        deadline = math.inf if limit_us is None else self.env.now + limit_us
        processed = 0
        while self.env.peek() <= deadline:
            self.env.step()
            processed += 1
        return processed

    def run_until(self, event: simpy.Event, timeout_us: float) -> bool:
        """Step until event has triggered. Returns False if timeout_us passes first."""
        deadline = self.env.now + timeout_us
        while not event.triggered:
            if self.env.peek() > deadline:
                if deadline > self.env.now:
                    self.env.run(until=deadline)
                return False
            self.env.step()
        return True

    def call_later(self, delay_us: float, callback: Callable[[], None]) -> simpy.Event:
        timer = self.env.timeout(max(0.0, delay_us))
        timer.callbacks.append(lambda _: callback())
        return timer

    def spawn(self, generator: Generator) -> simpy.Process:
        return self.env.process(generator)

    def event(self) -> simpy.Event:
        return self.env.event()
