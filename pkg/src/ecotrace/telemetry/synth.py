"""Deterministic synthetic traces built from piecewise-constant segments.

Used as a test substrate: because every channel is constant within a
segment and segment boundaries are always sampled, sample-and-hold
integration of the resulting trace reproduces the closed-form integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..catalog import CpuSpec, HardwareSpec
from ..errors import EmptyTraceError, TraceValidationError
from .trace import BYTES_PER_GB, PowerSample, TelemetryTrace

Vec = Union[float, Sequence[float], None]


def _vec(value: Vec) -> Optional[tuple[float, ...]]:
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (float(value),)
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class Segment:
    """One constant-power stretch of a synthetic trace.

    Power channels are in W (per package / per device); CPU activity is the
    number of fully busy cores; memory is in GB. ``None`` leaves the
    channel out of the trace.
    """

    duration: float
    rapl_package_w: Vec = None
    rapl_dram_w: Vec = None
    gpu_w: Vec = None
    gpu_util: Vec = None
    process_cores: Optional[float] = None
    machine_cores: Optional[float] = None
    process_rss_gb: Optional[float] = None
    machine_memory_gb: Optional[float] = None
    wattmeter_w: Optional[float] = None

    def present(self) -> tuple[bool, ...]:
        return tuple(getattr(self, f) is not None for f in _CHANNEL_FIELDS)


_CHANNEL_FIELDS = (
    "rapl_package_w", "rapl_dram_w", "gpu_w", "gpu_util", "process_cores",
    "machine_cores", "process_rss_gb", "machine_memory_gb", "wattmeter_w",
)

SYNTH_HARDWARE = HardwareSpec(
    cpu=CpuSpec("Synthetic CPU", sockets=1, cores_per_socket=16, logical_cores=16),
    memory_total=64.0,
)


def _check_segments(segments: Sequence[Segment]) -> None:
    for i, seg in enumerate(segments):
        if seg.duration < 0:
            raise TraceValidationError(i, "negative segment duration")
        for name in _CHANNEL_FIELDS:
            value = getattr(seg, name)
            for v in _vec(value) or ():
                if v < 0:
                    raise TraceValidationError(i, f"negative {name} in segment")
        util = _vec(seg.gpu_util)
        if util and any(u > 1 for u in util):
            raise TraceValidationError(i, "gpu_util above 1")
        if seg.present() != segments[0].present():
            raise TraceValidationError(i, "segments disagree on which channels exist")


def synth_trace(
    segments: Sequence[Segment],
    interval: float,
    *,
    hardware: HardwareSpec = SYNTH_HARDWARE,
    start: float = 0.0,
    counter_ranges: Optional[dict] = None,
    counter_offsets: Optional[dict] = None,
    cpu_time_offset: float = 0.0,
    epoch_marks: Optional[Sequence[float]] = None,
) -> TelemetryTrace:
    """Sample ``segments`` every ``interval`` seconds (plus every boundary).

    ``counter_ranges`` maps ``"rapl_package"``/``"rapl_dram"`` to per-package
    max ranges in µJ; counters then wrap modulo that range.
    ``counter_offsets`` gives the initial counter readings (µJ).
    """
    if not interval > 0:
        raise ValueError("interval must be positive")
    segments = list(segments)
    if not segments:
        raise EmptyTraceError("no segments")
    _check_segments(segments)
    total = math.fsum(s.duration for s in segments)
    if not total > 0:
        raise EmptyTraceError("synthetic trace has zero duration")

    bounds = [0.0]
    for seg in segments:
        bounds.append(bounds[-1] + seg.duration)
    bounds[-1] = total
    eps = 1e-9 * max(total, interval)
    times = set(bounds)
    k = 1
    while k * interval < total - eps:
        t = k * interval
        if all(abs(t - b) > eps for b in bounds):
            times.add(t)
        k += 1
    times = sorted(t for t in times if 0 <= t <= total)
    # drop zero-length segments' duplicate boundaries
    live = [(bounds[i], bounds[i + 1], seg) for i, seg in enumerate(segments)
            if bounds[i + 1] > bounds[i]]

    ranges = counter_ranges or {}
    offsets = counter_offsets or {}

    def integral(field: str, t: float) -> list[float]:
        # closed-form ∫0^t of a per-unit field
        acc = [0.0] * len(_vec(getattr(live[0][2], field)))
        for a, b, seg in live:
            if t <= a:
                break
            span = min(t, b) - a
            acc = [p + x * span for p, x in zip(acc, _vec(getattr(seg, field)))]
        return acc

    def held(t: float) -> Segment:
        for a, b, seg in live:
            if a <= t < b:
                return seg
        return live[-1][2]

    def counter(field: str, key: str, t: float):
        vals = integral(field, t)
        off = offsets.get(key)
        rng = ranges.get(key)
        out = []
        for i, joules in enumerate(vals):
            uj = joules * 1e6 + (off[i] if off else 0.0)
            if rng is not None:
                uj = math.fmod(uj, rng[i])
            out.append(uj)
        return tuple(out)

    first = segments[0]
    samples = []
    for t in times:
        seg = held(t)
        kw = {}
        if first.rapl_package_w is not None:
            kw["rapl_package_energy"] = counter("rapl_package_w", "rapl_package", t)
        if first.rapl_dram_w is not None:
            kw["rapl_dram_energy"] = counter("rapl_dram_w", "rapl_dram", t)
        if first.gpu_w is not None:
            kw["gpu_power"] = tuple(w * 1000.0 for w in _vec(seg.gpu_w))
        if first.gpu_util is not None:
            kw["gpu_utilization"] = _vec(seg.gpu_util)
        if first.process_cores is not None:
            kw["process_cpu_time"] = cpu_time_offset + _cpu(live, "process_cores", t)
        if first.machine_cores is not None:
            kw["machine_cpu_time"] = cpu_time_offset + _cpu(live, "machine_cores", t)
        if first.process_rss_gb is not None:
            kw["process_rss"] = seg.process_rss_gb * BYTES_PER_GB
        if first.machine_memory_gb is not None:
            kw["machine_memory_used"] = seg.machine_memory_gb * BYTES_PER_GB
        if first.wattmeter_w is not None:
            kw["wattmeter_power"] = float(seg.wattmeter_w)
        samples.append(PowerSample(timestamp=start + t, **kw))

    trace = TelemetryTrace(
        hardware=hardware,
        nominal_interval=interval,
        samples=tuple(samples),
        epoch_marks=tuple(epoch_marks) if epoch_marks is not None else None,
        counter_ranges={k: v for k, v in ranges.items()} or None,
    )
    return trace.validate()


def _cpu(live, field: str, t: float) -> float:
    acc = 0.0
    for a, b, seg in live:
        if t <= a:
            break
        acc += getattr(seg, field) * (min(t, b) - a)
    return acc
