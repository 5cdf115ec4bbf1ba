"""Counter differencing and sample-and-hold integration."""

from __future__ import annotations

import bisect
import math
from typing import Iterable, Sequence

from ..errors import OrderingError

UJ_PER_WH = 3.6e9
SECONDS_PER_HOUR = 3600.0


def counter_delta(prev: float, curr: float, max_range: float) -> float:
    """Energy between two cumulative counter readings, allowing one wrap."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    if not (0 <= prev <= max_range and 0 <= curr <= max_range):
        raise ValueError(f"counter readings must lie in [0, {max_range}]: {prev}, {curr}")
    if curr >= prev:
        return curr - prev
    return curr - prev + max_range


def _check_times(times: Sequence[float]) -> None:
    if len(times) < 2:
        raise OrderingError("integration needs at least 2 samples")
    for i in range(1, len(times)):
        if not times[i] > times[i - 1]:
            raise OrderingError(
                f"timestamps must strictly increase: t[{i}]={times[i]} after t[{i - 1}]={times[i - 1]}"
            )


def integrate_power(samples: Iterable[tuple[float, float]]) -> float:
    """Left-rectangle integral of (timestamp s, power W) samples, in Wh.

    Each power reading is held until the next timestamp; the last reading
    only closes the interval.
    """
    samples = list(samples)
    times = [t for t, _ in samples]
    _check_times(times)
    return math.fsum(
        p * (samples[i + 1][0] - t) for i, (t, p) in enumerate(samples[:-1])
    ) / SECONDS_PER_HOUR


class StepSeries:
    """Piecewise-constant power: ``values[i]`` holds on ``[times[i], times[i+1])``.

    ``len(values) == len(times) - 1``.
    """

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        times = list(times)
        _check_times(times)
        if len(values) != len(times) - 1:
            raise ValueError("need one value per interval")
        self.times = times
        self.values = list(values)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[float, float]]) -> "StepSeries":
        return cls([t for t, _ in samples], [p for _, p in samples[:-1]])

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def end(self) -> float:
        return self.times[-1]

    def energy(self, start: float | None = None, end: float | None = None) -> float:
        """Integral over ``[start, end]`` (clipped to the series), in Wh."""
        a = self.start if start is None else max(start, self.start)
        b = self.end if end is None else min(end, self.end)
        if b <= a:
            return 0.0
        times, values = self.times, self.values
        i = bisect.bisect_right(times, a) - 1
        parts = []
        while i < len(values) and times[i] < b:
            lo = max(times[i], a)
            hi = min(times[i + 1], b)
            if hi > lo:
                parts.append(values[i] * (hi - lo))
            i += 1
        return math.fsum(parts) / SECONDS_PER_HOUR

    def mean(self) -> float:
        """Time-weighted mean value over the whole series."""
        return self.energy() * SECONDS_PER_HOUR / (self.end - self.start)
