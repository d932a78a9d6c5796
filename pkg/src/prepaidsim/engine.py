"""Deterministic discrete-event core: virtual clock, event queue, channel pool, PRNG.

Virtual time is integer seconds with no wall-clock coupling. Events fire in
total order by (fire_time, schedule sequence), so two runs of the same scenario
and seed replay the exact same trace. Floating point only appears in the
workload generator's exponential draws; all billing math stays integer.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable


class SchedulingInPast(Exception):
    """An event was scheduled to fire before the current virtual clock."""


class NoChannelAvailable(Exception):
    """The channel pool is exhausted."""


class EmptyAccountUniverse(Exception):
    """A random workload needs at least one account to draw callers from."""


@dataclass(order=True)
class SimEvent:
    fire_time: int
    seq: int
    action: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)
    fired: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        """Mark the event dead; a cancelled event never fires."""
        self.cancelled = True


class EventQueue:
    """Priority queue over virtual time. Ties break by schedule order."""

    def __init__(self) -> None:
        self.clock = 0
        self._heap: list[SimEvent] = []
        self._next_seq = 0
        self.processed = 0

    def schedule(self, fire_time: int, action: Callable[[], None]) -> SimEvent:
        if fire_time < self.clock:
            raise SchedulingInPast(f"fire_time {fire_time} < clock {self.clock}")
        event = SimEvent(fire_time, self._next_seq, action)
        self._next_seq += 1
        heapq.heappush(self._heap, event)
        return event

    def run_until(self, end_time: int) -> int:
        """Process every event with fire_time <= end_time; returns the count fired."""
        fired = 0
        while self._heap and self._heap[0].fire_time <= end_time:
            event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            self.clock = event.fire_time
            event.fired = True
            event.action()
            fired += 1
        self.clock = max(self.clock, end_time)
        self.processed += fired
        return fired

    def pending(self) -> int:
        return sum(1 for e in self._heap if not e.cancelled)


@dataclass
class ChannelHandle:
    kind: str
    released: bool = False


class ChannelPool:
    """Counted pool of voice (or notification) channels with peak tracking.

    capacity=None means unlimited.
    """

    def __init__(self, capacity: int | None = None, name: str = "voice") -> None:
        if capacity is not None and capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.name = name
        self.in_use = 0
        self.peak_in_use = 0
        self.total_allocated = 0
        self.total_released = 0

    def allocate(self, kind: str = "voice") -> ChannelHandle:
        if self.capacity is not None and self.in_use >= self.capacity:
            raise NoChannelAvailable(f"{self.name} pool exhausted (capacity {self.capacity})")
        self.in_use += 1
        self.total_allocated += 1
        self.peak_in_use = max(self.peak_in_use, self.in_use)
        return ChannelHandle(kind)

    def release(self, handle: ChannelHandle) -> None:
        if handle.released:
            raise ValueError("channel handle released twice")
        handle.released = True
        self.in_use -= 1
        self.total_released += 1


# xorshift64-star. The constants are part of the wire contract: any
# implementation seeded identically must reproduce the sequence bit-exactly.
_MASK64 = (1 << 64) - 1
_MULTIPLIER = 2685821657736338717
# Replacement state for seed 0 (the all-zero state is a fixed point).
SEED_ZERO_REMAP = 0x9E3779B97F4A7C15


class Xorshift64Star:
    """64-bit xorshift* generator; seed 0 is remapped to SEED_ZERO_REMAP."""

    def __init__(self, seed: int) -> None:
        self.state = (seed & _MASK64) or SEED_ZERO_REMAP

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _MULTIPLIER) & _MASK64

    def next_unit(self) -> float:
        """Uniform draw in (0, 1], safe as the argument of log()."""
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def next_below(self, n: int) -> int:
        return self.next_u64() % n


class WorkloadMode(Enum):
    SCRIPTED = "scripted"
    RANDOM = "random"


@dataclass(frozen=True)
class ScriptedCall:
    start_time: int
    caller: str
    callee: str
    duration: int
    scheme: "object | None" = None  # SchemeKind; kept loose to avoid an import cycle


@dataclass(frozen=True)
class RandomWorkload:
    seed: int
    arrival_rate: float
    mean_duration: float
    account_universe: tuple[str, ...]
    schemes: tuple = ()


@dataclass
class WorkloadSpec:
    mode: WorkloadMode
    scripted_calls: list[ScriptedCall] = field(default_factory=list)
    random: RandomWorkload | None = None


def generate_workload(spec: WorkloadSpec, horizon: int) -> list[ScriptedCall]:
    """Expand a workload spec into a concrete, time-ordered call list.

    Random mode draws Poisson arrivals (exponential gaps of mean 1/rate) and
    exponential durations, both via -mean * ln(u); callers and callees are
    uniform over the account universe. Fully determined by the seed.
    """
    if spec.mode is WorkloadMode.SCRIPTED:
        return list(spec.scripted_calls)

    rnd = spec.random
    assert rnd is not None
    universe = rnd.account_universe
    if not universe:
        raise EmptyAccountUniverse("random workload requires a non-empty account universe")
    rng = Xorshift64Star(rnd.seed)
    calls: list[ScriptedCall] = []
    t = 0.0
    while True:
        t += -(1.0 / rnd.arrival_rate) * math.log(rng.next_unit())
        start = int(t)
        if start > horizon:
            break
        duration = int(-rnd.mean_duration * math.log(rng.next_unit()))
        caller_ix = rng.next_below(len(universe))
        callee_ix = rng.next_below(len(universe))
        if callee_ix == caller_ix and len(universe) > 1:
            callee_ix = (callee_ix + 1) % len(universe)
        scheme = rnd.schemes[rng.next_below(len(rnd.schemes))] if rnd.schemes else None
        calls.append(ScriptedCall(start, universe[caller_ix], universe[callee_ix], duration, scheme))
    return calls
