"""Canonical telemetry trace format.

A trace file is line-delimited JSON. The first line is a header::

    {"schema_version": 1, "hardware": {...}, "nominal_interval": 10.0,
     "counter_ranges": {"rapl_package": [...], "rapl_dram": [...]}}

Every following line is either one sample (keys are the
:class:`PowerSample` field names; absent channels are omitted) or an epoch
mark ``{"epoch_mark": <timestamp>}``.

Units: counters in µJ, GPU power in mW, wattmeter in W, memory in bytes,
CPU time and timestamps in seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

from ..catalog import HardwareSpec
from ..errors import (
    ChannelMissingError,
    EmptyTraceError,
    TraceValidationError,
    TraceVersionError,
)
from .integrate import UJ_PER_WH, StepSeries, counter_delta

SCHEMA_VERSION = 1
BYTES_PER_GB = float(2**30)

COUNTER_CHANNELS = ("rapl_package_energy", "rapl_dram_energy")
VECTOR_CHANNELS = COUNTER_CHANNELS + ("gpu_power", "gpu_utilization")
SCALAR_CHANNELS = (
    "process_cpu_time",
    "machine_cpu_time",
    "process_rss",
    "machine_memory_used",
    "wattmeter_power",
)
CHANNELS = VECTOR_CHANNELS + SCALAR_CHANNELS

# short aliases accepted by the channel helpers
_ALIASES = {
    "rapl_package": "rapl_package_energy",
    "rapl_dram": "rapl_dram_energy",
    "gpu": "gpu_power",
    "wattmeter": "wattmeter_power",
}


def channel_name(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in CHANNELS:
        raise ValueError(f"unknown channel {name!r}")
    return name


@dataclass(frozen=True)
class PowerSample:
    timestamp: float
    rapl_package_energy: Optional[tuple[float, ...]] = None  # µJ per package, cumulative
    rapl_dram_energy: Optional[tuple[float, ...]] = None  # µJ per package, cumulative
    gpu_power: Optional[tuple[float, ...]] = None  # mW per device
    gpu_utilization: Optional[tuple[float, ...]] = None  # fraction per device
    process_cpu_time: Optional[float] = None  # s, cumulative
    machine_cpu_time: Optional[float] = None  # s, cumulative
    process_rss: Optional[float] = None  # bytes
    machine_memory_used: Optional[float] = None  # bytes
    wattmeter_power: Optional[float] = None  # W

    def __post_init__(self):
        for name in VECTOR_CHANNELS:
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))

    def channels(self) -> frozenset[str]:
        return frozenset(c for c in CHANNELS if getattr(self, c) is not None)

    def to_record(self) -> dict:
        rec = {"timestamp": self.timestamp}
        for name in CHANNELS:
            value = getattr(self, name)
            if value is not None:
                rec[name] = list(value) if isinstance(value, tuple) else value
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "PowerSample":
        known = {f.name for f in fields(cls)}
        unknown = set(rec) - known
        if unknown:
            raise ValueError(f"unknown sample fields {sorted(unknown)}")
        return cls(**rec)


@dataclass(frozen=True)
class TelemetryTrace:
    hardware: HardwareSpec
    nominal_interval: float
    samples: tuple[PowerSample, ...]
    epoch_marks: Optional[tuple[float, ...]] = None
    counter_ranges: Optional[dict] = field(default=None, compare=True)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.epoch_marks is not None:
            object.__setattr__(self, "epoch_marks", tuple(self.epoch_marks))
        if not self.counter_ranges:
            object.__setattr__(self, "counter_ranges", None)
        else:
            ranges = {channel_name(k): tuple(v) for k, v in self.counter_ranges.items()}
            object.__setattr__(self, "counter_ranges", ranges)

    # -- basic accessors

    @property
    def start(self) -> float:
        return self.samples[0].timestamp

    @property
    def end(self) -> float:
        return self.samples[-1].timestamp

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def timestamps(self) -> list[float]:
        return [s.timestamp for s in self.samples]

    def has_channel(self, name: str) -> bool:
        name = channel_name(name)
        return bool(self.samples) and all(getattr(s, name) is not None for s in self.samples)

    def require(self, name: str, what: str = "") -> None:
        if not self.has_channel(name):
            raise ChannelMissingError(channel_name(name), what)

    def channels(self) -> frozenset[str]:
        return frozenset(c for c in CHANNELS if self.has_channel(c))

    def counter_range(self, name: str, index: int) -> Optional[float]:
        ranges = (self.counter_ranges or {}).get(channel_name(name))
        if ranges is None or index >= len(ranges):
            return None
        return ranges[index]

    # -- per-interval derived series

    def counter_deltas(self, name: str) -> list[float]:
        """Energy per interval (µJ), summed over packages, wraps corrected."""
        name = channel_name(name)
        self.require(name)
        out = []
        for prev, curr in zip(self.samples, self.samples[1:]):
            a, b = getattr(prev, name), getattr(curr, name)
            total = []
            for k, (x, y) in enumerate(zip(a, b)):
                rng = self.counter_range(name, k)
                if rng is None:
                    total.append(y - x)
                else:
                    total.append(counter_delta(x, y, rng))
            out.append(math.fsum(total))
        return out

    def counter_energy_wh(self, name: str) -> float:
        return math.fsum(self.counter_deltas(name)) / UJ_PER_WH

    def step_series(self, name: str) -> StepSeries:
        """The channel as piecewise-constant power in W (or raw value for
        non-power channels such as memory and utilization)."""
        name = channel_name(name)
        self.require(name)
        times = self.timestamps
        if name in COUNTER_CHANNELS:
            deltas = self.counter_deltas(name)
            values = [d / 1e6 / (times[i + 1] - times[i]) for i, d in enumerate(deltas)]
        elif name == "gpu_power":
            values = [math.fsum(s.gpu_power) / 1000.0 for s in self.samples[:-1]]
        elif name == "gpu_utilization":
            values = [math.fsum(s.gpu_utilization) / len(s.gpu_utilization)
                      for s in self.samples[:-1]]
        elif name in ("process_cpu_time", "machine_cpu_time"):
            values = [
                (getattr(b, name) - getattr(a, name)) / (b.timestamp - a.timestamp)
                for a, b in zip(self.samples, self.samples[1:])
            ]
        else:
            values = [getattr(s, name) for s in self.samples[:-1]]
        return StepSeries(times, values)

    def power_energy_wh(self, name: str) -> float:
        """Energy of a power-valued channel over the whole trace, Wh."""
        name = channel_name(name)
        if name in COUNTER_CHANNELS:
            return self.counter_energy_wh(name)
        if name not in ("gpu_power", "wattmeter_power"):
            raise ValueError(f"{name} is not a power channel")
        return self.step_series(name).energy()

    # -- validation

    def validate(self) -> "TelemetryTrace":
        if self.schema_version != SCHEMA_VERSION:
            raise TraceVersionError(f"unsupported schema_version {self.schema_version}")
        if not self.nominal_interval > 0:
            raise TraceValidationError(-1, "nominal_interval must be positive")
        if len(self.samples) < 2:
            raise EmptyTraceError(f"trace has {len(self.samples)} samples; need at least 2")
        first = self.samples[0]
        present = first.channels()
        widths = {c: len(getattr(first, c)) for c in VECTOR_CHANNELS if c in present}
        prev = None
        for i, s in enumerate(self.samples):
            if not all(math.isfinite(x) for x in _numbers(s)):
                raise TraceValidationError(i, "non-finite value")
            if s.channels() != present:
                raise TraceValidationError(
                    i, f"channel set changed: {sorted(s.channels() ^ present)}")
            for c, w in widths.items():
                if len(getattr(s, c)) != w:
                    raise TraceValidationError(i, f"{c} has {len(getattr(s, c))} entries, expected {w}")
            if s.gpu_utilization is not None and not all(0 <= u <= 1 for u in s.gpu_utilization):
                raise TraceValidationError(i, "gpu_utilization outside [0, 1]")
            for c in ("gpu_power", "rapl_package_energy", "rapl_dram_energy"):
                v = getattr(s, c)
                if v is not None and any(x < 0 for x in v):
                    raise TraceValidationError(i, f"negative {c}")
            for c in SCALAR_CHANNELS:
                v = getattr(s, c)
                if v is not None and v < 0:
                    raise TraceValidationError(i, f"negative {c}")
            if (s.process_cpu_time is not None and s.machine_cpu_time is not None
                    and s.process_cpu_time > s.machine_cpu_time):
                raise TraceValidationError(i, "process_cpu_time exceeds machine_cpu_time")
            if prev is not None:
                if not s.timestamp > prev.timestamp:
                    raise TraceValidationError(i, f"timestamp {s.timestamp} does not increase")
                for c in ("process_cpu_time", "machine_cpu_time"):
                    if getattr(s, c) is not None and getattr(s, c) < getattr(prev, c):
                        raise TraceValidationError(i, f"{c} decreases")
                for c in COUNTER_CHANNELS:
                    if getattr(s, c) is None:
                        continue
                    for k, (x, y) in enumerate(zip(getattr(prev, c), getattr(s, c))):
                        rng = self.counter_range(c, k)
                        if rng is None:
                            if y < x:
                                raise TraceValidationError(i, f"{c}[{k}] decreases with no known range")
                        elif not (x <= rng and y <= rng):
                            raise TraceValidationError(i, f"{c}[{k}] exceeds max range {rng}")
            prev = s
        if self.epoch_marks is not None:
            marks = self.epoch_marks
            if list(marks) != sorted(marks):
                raise TraceValidationError(-1, "epoch_marks not sorted")
            if marks and (marks[0] < self.start or marks[-1] > self.end):
                raise TraceValidationError(-1, "epoch_marks outside the trace time span")
        return self

    def with_samples(self, samples: Sequence[PowerSample]) -> "TelemetryTrace":
        return replace(self, samples=tuple(samples))


def _numbers(s: PowerSample):
    yield s.timestamp
    for c in CHANNELS:
        v = getattr(s, c)
        if v is None:
            continue
        if isinstance(v, tuple):
            yield from v
        else:
            yield v


# --------------------------------------------------------------------------
# file IO


def _header(trace: TelemetryTrace) -> dict:
    header = {
        "schema_version": trace.schema_version,
        "hardware": trace.hardware.to_dict(),
        "nominal_interval": trace.nominal_interval,
    }
    if trace.counter_ranges:
        header["counter_ranges"] = {k: list(v) for k, v in sorted(trace.counter_ranges.items())}
    if trace.epoch_marks is not None:
        header["has_epoch_marks"] = True
    return header


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


class TraceWriter:
    """Append-only writer so long recordings never sit fully in memory."""

    def __init__(self, path, hardware: HardwareSpec, nominal_interval: float,
                 counter_ranges: Optional[dict] = None):
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")
        header = _header(TelemetryTrace(hardware, nominal_interval, (), None, counter_ranges))
        self._fh.write(_dumps(header) + "\n")

    def write_sample(self, sample: PowerSample) -> None:
        self._fh.write(_dumps(sample.to_record()) + "\n")
        self._fh.flush()

    def write_mark(self, timestamp: float) -> None:
        self._fh.write(_dumps({"epoch_mark": timestamp}) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def save_trace(trace: TelemetryTrace, path) -> None:
    """Validate then write ``trace`` as line-delimited JSON."""
    trace.validate()
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_dumps(_header(trace)) + "\n")
        for s in trace.samples:
            fh.write(_dumps(s.to_record()) + "\n")
        for m in trace.epoch_marks or ():
            fh.write(_dumps({"epoch_mark": m}) + "\n")


def read_header(path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        return json.loads(fh.readline())


def iter_samples(path) -> Iterator[PowerSample]:
    """Stream samples from a trace file without loading it whole."""
    with Path(path).open(encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "epoch_mark" in rec:
                continue
            yield PowerSample.from_record(rec)


def load_trace(path, validate: bool = True) -> TelemetryTrace:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise EmptyTraceError(f"{path}: empty trace file")
        header = json.loads(first)
        version = header.get("schema_version")
        if version != SCHEMA_VERSION:
            raise TraceVersionError(f"{path}: unsupported schema_version {version!r}")
        samples, marks = [], []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "epoch_mark" in rec:
                marks.append(rec["epoch_mark"])
            else:
                samples.append(PowerSample.from_record(rec))
    has_marks = bool(marks) or header.get("has_epoch_marks", False)
    trace = TelemetryTrace(
        hardware=HardwareSpec.from_dict(header["hardware"]),
        nominal_interval=header["nominal_interval"],
        samples=tuple(samples),
        epoch_marks=tuple(marks) if has_marks else None,
        counter_ranges=header.get("counter_ranges"),
        schema_version=version,
    )
    return trace.validate() if validate else trace
