"""Deterministic discrete-event kernel, seeded random streams and statistics.

Random streams use numpy's counter-based Philox generator. The 128-bit Philox
key is built from ``(seed, stream_id)`` so every stream is a distinct key of
the same block cipher; streams therefore never share state and reproduce
bit-for-bit across platforms.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy import stats

__all__ = [
    "PastTimeError",
    "SimEvent",
    "EventHandle",
    "RunSummary",
    "Simulator",
    "RngStream",
    "draw_uniform",
    "StatAccumulator",
    "FifoLink",
]

RNG_ALGORITHM = "Philox4x64-10"


class PastTimeError(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(order=True)
class SimEvent:
    time: float
    sequence: int
    kind: str = field(default="", compare=False)
    payload: Any = field(default=None, compare=False)
    handler: Optional[Callable[["Simulator", "SimEvent"], None]] = field(
        default=None, compare=False, repr=False
    )
    cancelled: bool = field(default=False, compare=False, repr=False)


@dataclass(frozen=True)
class EventHandle:
    event: SimEvent

    def cancel(self) -> None:
        self.event.cancelled = True

    @property
    def time(self) -> float:
        return self.event.time


@dataclass(frozen=True)
class RunSummary:
    events_processed: int
    clock: float


class Simulator:
    """Single-threaded event loop with FIFO ordering among equal timestamps.

    >>> sim = Simulator()
    >>> order = []
    >>> _ = sim.schedule(5.0, lambda s, e: order.append("A"))
    >>> _ = sim.schedule(5.0, lambda s, e: order.append("B"))
    >>> sim.run_until(10.0)
    RunSummary(events_processed=2, clock=10.0)
    >>> order
    ['A', 'B']
    """

    def __init__(self, start: float = 0.0):
        self.now = float(start)
        self._queue: list[SimEvent] = []
        self._seq = 0
        self.events_processed = 0

    def schedule(self, time, handler=None, kind="", payload=None) -> EventHandle:
        time = float(time)
        if time < self.now:
            raise PastTimeError(f"event at t={time!r} is before clock t={self.now!r}")
        ev = SimEvent(time, self._seq, kind, payload, handler)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return EventHandle(ev)

    def schedule_in(self, delay, handler=None, kind="", payload=None) -> EventHandle:
        return self.schedule(self.now + delay, handler, kind, payload)

    def __len__(self):
        return sum(1 for ev in self._queue if not ev.cancelled)

    def peek(self) -> float:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].time if self._queue else math.inf

    def step(self) -> Optional[SimEvent]:
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.time
            self.events_processed += 1
            if ev.handler is not None:
                ev.handler(self, ev)
            return ev
        return None

    def run_until(self, t_end) -> RunSummary:
        t_end = float(t_end)
        if t_end < self.now:
            raise PastTimeError(f"t_end={t_end!r} is before clock t={self.now!r}")
        processed = 0
        while self.peek() <= t_end:
            self.step()
            processed += 1
        self.now = t_end
        return RunSummary(processed, self.now)


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= seed < 2**64 or not 0 <= stream_id < 2**64:
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.bit_generator = np.random.Philox(key=self.seed | (self.stream_id << 64))
        self.generator = np.random.Generator(self.bit_generator)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, index: int) -> "RngStream":
        """A child stream whose id is derived by hashing (stream_id, index)."""
        mixed = np.random.SeedSequence([self.stream_id, index]).generate_state(1, np.uint64)[0]
        return RngStream(self.seed, int(mixed))


def draw_uniform(stream: RngStream, lo: float, hi: float) -> float:
    if not lo < hi:
        raise ValueError(f"draw_uniform requires lo < hi, got lo={lo}, hi={hi}")
    return float(stream.generator.uniform(lo, hi))


class StatAccumulator:
    """Running moments plus batch means for Student-t confidence intervals."""

    def __init__(self, name: str = ""):
        self.name = name
        self.count = 0
        self.sum = 0.0
        self.sum_sq = 0.0
        self.batch_means: list[float] = []

    def add(self, value: float) -> None:
        self.count += 1
        self.sum += value
        self.sum_sq += value * value

    def add_many(self, values) -> None:
        values = np.asarray(values, dtype=float)
        self.count += values.size
        self.sum += float(values.sum())
        self.sum_sq += float(np.dot(values, values))

    def add_batch(self, batch_mean: float) -> None:
        self.batch_means.append(float(batch_mean))

    @property
    def mean(self) -> float:
        if self.batch_means and self.count == 0:
            return float(np.mean(self.batch_means))
        return self.sum / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        var = (self.sum_sq - self.sum * self.sum / self.count) / (self.count - 1)
        return max(var, 0.0)

    def ci_halfwidth(self, level: float = 0.95) -> float:
        b = len(self.batch_means)
        if b < 2:
            return math.inf
        sd = float(np.std(self.batch_means, ddof=1))
        return float(stats.t.ppf(0.5 + level / 2, b - 1)) * sd / math.sqrt(b)

    def converged(self, rel: float = 0.05, level: float = 0.95, min_batches: int = 10) -> bool:
        if len(self.batch_means) < min_batches:
            return False
        centre = float(np.mean(self.batch_means))
        if centre == 0.0:
            return self.ci_halfwidth(level) == 0.0
        return self.ci_halfwidth(level) <= rel * abs(centre)


def batch_accumulator(name, values_per_batch) -> StatAccumulator:
    """Build an accumulator whose batch means are the given per-batch values."""
    acc = StatAccumulator(name)
    for v in values_per_batch:
        acc.add_batch(v)
    return acc


class FifoLink:
    """Work-conserving FIFO link with optional byte tail-drop.

    Departure times are fixed at enqueue time, so no departure events are
    needed; callers feed arrivals in nondecreasing time order.
    """

    def __init__(self, rate: float, buffer_bits: float = math.inf):
        if rate <= 0:
            raise ValueError("link rate must be positive")
        self.rate = float(rate)
        self.buffer_bits = float(buffer_bits)
        self.last_departure = 0.0
        self._inflight: deque = deque()
        self._occupancy = 0.0
        self.dropped_bits = 0.0
        self.dropped = 0

    def occupancy(self, t: float) -> float:
        inflight = self._inflight
        while inflight and inflight[0][0] <= t:
            self._occupancy -= inflight.popleft()[1]
        if not inflight:
            self._occupancy = 0.0
        return self._occupancy

    def backlog_time(self, t: float) -> float:
        """Unfinished work at ``t`` expressed in seconds of transmission."""
        return max(self.last_departure - t, 0.0)

    def offer(self, t: float, bits: float) -> float:
        """Enqueue ``bits`` at ``t``; return the departure time or NaN if dropped."""
        if self.occupancy(t) + bits > self.buffer_bits:
            self.dropped += 1
            self.dropped_bits += bits
            return math.nan
        start = self.last_departure if self.last_departure > t else t
        dep = start + bits / self.rate
        self.last_departure = dep
        self._inflight.append((dep, bits))
        self._occupancy += bits
        return dep
