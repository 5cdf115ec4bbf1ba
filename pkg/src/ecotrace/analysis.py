"""Experiment analyses on traces: epoch extrapolation, idle baseline,
comparison against a wattmeter, and tracker overhead."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    DegenerateGroundTruthError,
    InsufficientDataError,
    MarksRequiredError,
)
from .estimators import EnergyBreakdown, row_order
from .telemetry.integrate import SECONDS_PER_HOUR
from .telemetry.trace import TelemetryTrace, channel_name

log = logging.getLogger(__name__)

WATTMETER = "wattmeter_power"
POWER_CHANNELS = ("rapl_package_energy", "rapl_dram_energy", "gpu_power", WATTMETER)


def _power_channels(trace: TelemetryTrace) -> list[str]:
    return [c for c in POWER_CHANNELS if trace.has_channel(c)]


# --------------------------------------------------------------------------
# epochs


@dataclass(frozen=True)
class EpochProfile:
    epoch_index: int
    duration: float  # s
    energy: Mapping[str, float] = field(default_factory=dict)  # Wh per channel

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("epoch duration must be positive")
        if any(v < 0 for v in self.energy.values()):
            raise ValueError("epoch energies must be >= 0")

    def total(self, channel: Optional[str] = None) -> float:
        """Energy of one channel; by default the wattmeter when present,
        otherwise the sum of the component channels."""
        if channel is not None:
            return self.energy[channel_name(channel)]
        if WATTMETER in self.energy:
            return self.energy[WATTMETER]
        return math.fsum(self.energy.values())


def split_by_epochs(trace: TelemetryTrace) -> list[EpochProfile]:
    """Integrate every power channel between consecutive epoch marks."""
    marks = trace.epoch_marks or ()
    if len(marks) < 2:
        raise MarksRequiredError(f"need at least 2 epoch marks, trace has {len(marks)}")
    series = {c: trace.step_series(c) for c in _power_channels(trace)}
    profiles = []
    for i, (a, b) in enumerate(zip(marks, marks[1:])):
        if not b > a:
            raise MarksRequiredError(f"epoch marks {i} and {i + 1} do not enclose any time")
        energy = {c: s.energy(a, b) for c, s in series.items()}
        profiles.append(EpochProfile(i, b - a, energy))
    return profiles


def extrapolate(
    profiles: Sequence[EpochProfile], total_epochs: int, channel: Optional[str] = None
) -> tuple[float, float]:
    """(energy Wh, duration s) for ``total_epochs`` from the mean of the
    measured epochs."""
    k = len(profiles)
    if k == 0:
        raise InsufficientDataError("no epoch profiles to extrapolate from")
    if total_epochs < k:
        raise ValueError(f"total_epochs ({total_epochs}) is smaller than the {k} measured")
    energy = math.fsum(p.total(channel) for p in profiles) / k
    duration = math.fsum(p.duration for p in profiles) / k
    return energy * total_epochs, duration * total_epochs


# --------------------------------------------------------------------------
# idle baseline


@dataclass(frozen=True)
class IdleResult:
    idle_power: float  # W
    active_energy: float  # Wh
    active_duration: float  # s
    dynamic_energy: float  # Wh
    idle_fraction: float


def idle_baseline_from_totals(
    active_energy: float, active_duration: float, idle_energy: float, idle_duration: float
) -> IdleResult:
    """Split measured energy into static (idle) and dynamic parts, assuming
    the idle power stays constant over the active window."""
    if not idle_duration > 0:
        raise ValueError("idle duration must be positive")
    if not active_duration > 0:
        raise ValueError("active duration must be positive")
    if active_energy < 0 or idle_energy < 0:
        raise ValueError("energies must be >= 0")
    idle_power = idle_energy * SECONDS_PER_HOUR / idle_duration
    static = idle_power * active_duration / SECONDS_PER_HOUR
    fraction = static / active_energy if active_energy > 0 else math.nan
    return IdleResult(idle_power, active_energy, active_duration, active_energy - static, fraction)


def idle_baseline(
    active: TelemetryTrace, idle: TelemetryTrace, channel: str = WATTMETER
) -> IdleResult:
    channel = channel_name(channel)
    active.require(channel, "idle baseline")
    idle.require(channel, "idle baseline")
    return idle_baseline_from_totals(
        active.power_energy_wh(channel), active.duration,
        idle.power_energy_wh(channel), idle.duration,
    )


# --------------------------------------------------------------------------
# wattmeter comparison


@dataclass(frozen=True)
class ComparisonRow:
    strategy_id: str  # row label, e.g. "CC(M)"
    energy_wo_pue: float  # Wh
    wattmeter_energy: float  # Wh
    percentage: float  # fraction of the wattmeter energy


def compare_to_wattmeter(
    breakdowns: Iterable[EnergyBreakdown], trace: TelemetryTrace
) -> list[ComparisonRow]:
    trace.require(WATTMETER, "comparison needs a wattmeter")
    reference = trace.power_energy_wh(WATTMETER)
    if not reference > 0:
        raise DegenerateGroundTruthError("wattmeter energy is zero")
    rows = [
        ComparisonRow(b.label, b.total_energy, reference, b.total_energy / reference)
        for b in breakdowns
    ]
    return sorted(rows, key=lambda r: row_order(r.strategy_id))


# --------------------------------------------------------------------------
# tracker overhead


@dataclass(frozen=True)
class OverheadResult:
    extra_time: float  # s, floored at 0
    extra_energy: float  # Wh
    overload: float  # fraction
    raw_extra_time: float  # s, before flooring


def overhead_from_totals(
    duration_with: float,
    duration_without: float,
    parallel_energy: float,
    extra_energy: float,
) -> OverheadResult:
    """Overhead of a tracker when a tracked and an untracked copy of the
    same job run side by side on one metered node.

    ``parallel_energy`` is metered while both copies run; ``extra_energy``
    while only the slower, tracked one does. The overload is the extra
    energy as a share of everything the tracked copy was metered for.
    """
    raw = duration_with - duration_without
    if raw <= 0:
        if raw < 0:
            log.info("tracked run finished %.3f s earlier; overhead counted as 0", -raw)
        return OverheadResult(0.0, 0.0, 0.0, raw)
    if parallel_energy < 0 or extra_energy < 0:
        raise ValueError("energies must be >= 0")
    total = parallel_energy + extra_energy
    overload = extra_energy / total if total > 0 else 0.0
    return OverheadResult(raw, extra_energy, overload, raw)


def overhead_report(
    with_tracker: TelemetryTrace,
    without: TelemetryTrace,
    idle_power: float = 0.0,
    channel: str = WATTMETER,
) -> OverheadResult:
    """Trace version of :func:`overhead_from_totals`.

    Both traces are aligned at their start. The tracked trace's meter is
    split at the moment the untracked run ended; ``idle_power`` (W) is
    removed from the part after it.
    """
    channel = channel_name(channel)
    with_tracker.require(channel, "overhead report")
    without.require(channel, "overhead report")
    series = with_tracker.step_series(channel)
    split = with_tracker.start + min(without.duration, with_tracker.duration)
    parallel = series.energy(with_tracker.start, split)
    raw = with_tracker.duration - without.duration
    extra = 0.0
    if raw > 0:
        extra = max(series.energy(split, with_tracker.end) - idle_power * raw / SECONDS_PER_HOUR, 0.0)
    return overhead_from_totals(with_tracker.duration, without.duration, parallel, extra)
