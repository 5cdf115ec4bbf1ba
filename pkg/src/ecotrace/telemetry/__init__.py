"""Telemetry acquisition, trace format and integration primitives."""

from .integrate import StepSeries, counter_delta, integrate_power
from .recorder import Recorder, SamplerConfig, record
from .sensors import GpuQuery, LiveSampler, RaplReader, sample_live
from .synth import Segment, synth_trace
from .trace import (
    BYTES_PER_GB,
    SCHEMA_VERSION,
    PowerSample,
    TelemetryTrace,
    TraceWriter,
    iter_samples,
    load_trace,
    save_trace,
)

__all__ = [
    "BYTES_PER_GB", "SCHEMA_VERSION", "GpuQuery", "LiveSampler", "PowerSample",
    "RaplReader", "Recorder", "SamplerConfig", "Segment", "StepSeries",
    "TelemetryTrace", "TraceWriter", "counter_delta", "integrate_power",
    "iter_samples", "load_trace", "record", "sample_live", "save_trace", "synth_trace",
]
