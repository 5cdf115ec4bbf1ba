"""The seven energy estimation strategies.

Every estimator is a pure function returning an :class:`EnergyBreakdown`
of CPU, GPU and memory energy in Wh *before* PUE. A component a strategy
does not measure is ``None`` (absent), never ``0``.

=========  =========================  =====================================
id         tool modelled              CPU / GPU / memory model
=========  =========================  =====================================
GA         Green-Algorithms           TDP x usage / TDP x usage / 0.3725 W/GB available
CC         CodeCarbon                 RAPL or TDP x 50% / GPU power / 0.375 W/GB used
E2         Eco2AI                     TDP x psutil usage / GPU power / 0.375 W/GB used
CT         CarbonTracker              RAPL package / GPU power / RAPL DRAM
EIT        Experiment-Impact-Tracker  RAPL x usage / GPU power x util / DRAM x RSS share
MLCO2      ML CO2 Impact              - / n x TDP at full load / -
CMLTR      Cumulator                  one CPU or one GPU at TDP, plus bytes sent
=========  =========================  =====================================
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .catalog import (
    MEASURED,
    STRATEGY_DEFAULT,
    USER,
    Constant,
    HardwareCatalog,
    HardwareSpec,
    Strategy,
    default_catalog,
)
from .errors import (
    NoMeasurableComponentError,
    RaplRequiredError,
    UnknownGpuError,
)
from .telemetry.integrate import SECONDS_PER_HOUR, UJ_PER_WH
from .telemetry.trace import BYTES_PER_GB, TelemetryTrace

log = logging.getLogger(__name__)

HARDWARE = "hardware"

GA_MEMORY_W_PER_GB = 0.3725
CC_MEMORY_W_PER_GB = 0.375
E2_MEMORY_W_PER_GB = 0.375
CC_TDP_USAGE = 0.5
BYTE_MODEL_KWH_PER_BYTE = 6.894e-11

MACHINE = "machine"
PROCESS = "process"
SCALAR = "scalar"

_ORDER = ["GA", "CC(P)", "CC(M)", "E2(P)", "E2(M)", "CT", "EIT", "MLCO2", "CMLTR"]


def row_order(label: str) -> tuple[int, str]:
    """Sort key putting strategy labels in the canonical column order."""
    return (_ORDER.index(label) if label in _ORDER else len(_ORDER), label)


@dataclass(frozen=True)
class UsageFactors:
    cpu_usage: float = 1.0
    gpu_usage: Optional[float] = 1.0
    memory_requested: Optional[float] = None  # GB
    source: str = USER  # provenance of the usage figures

    def __post_init__(self):
        if not 0 <= self.cpu_usage <= 1:
            raise ValueError("cpu_usage must be in [0, 1]")
        if self.gpu_usage is not None and not 0 <= self.gpu_usage <= 1:
            raise ValueError("gpu_usage must be in [0, 1]")
        if self.memory_requested is not None and self.memory_requested < 0:
            raise ValueError("memory_requested must be >= 0")


@dataclass(frozen=True)
class EnergyBreakdown:
    strategy_id: Strategy
    mode: str
    duration: float
    cpu_energy: Optional[float] = None
    gpu_energy: Optional[float] = None
    memory_energy: Optional[float] = None
    communication_energy: Optional[float] = None
    constants_used: tuple[Constant, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("cpu_energy", "gpu_energy", "memory_energy", "communication_energy"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} is negative")

    @property
    def total_energy(self) -> float:
        parts = (self.cpu_energy, self.gpu_energy, self.memory_energy, self.communication_energy)
        return math.fsum(p for p in parts if p is not None)

    @property
    def label(self) -> str:
        if self.strategy_id in (Strategy.CC, Strategy.E2):
            return f"{self.strategy_id.value}({self.mode[0].upper()})"
        return self.strategy_id.value

    def components(self) -> dict[str, Optional[float]]:
        return {
            "cpu": self.cpu_energy,
            "gpu": self.gpu_energy,
            "memory": self.memory_energy,
            "communication": self.communication_energy,
        }


class _Notes:
    """Collects constants and warnings while an estimator runs."""

    def __init__(self, strategy: Strategy):
        self.strategy = strategy
        self.constants: list[Constant] = []
        self.warnings: list[str] = []

    def const(self, name, value, provenance):
        self.constants.append(Constant(name, float(value), provenance))
        return value

    def warn(self, msg):
        log.warning("%s: %s", self.strategy, msg)
        self.warnings.append(msg)

    def build(self, mode, duration, **energies) -> EnergyBreakdown:
        return EnergyBreakdown(
            self.strategy, mode, duration,
            constants_used=tuple(self.constants), warnings=tuple(self.warnings),
            **energies,
        )


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _check_mode(mode: str) -> str:
    if mode not in (MACHINE, PROCESS):
        raise ValueError(f"mode must be 'machine' or 'process', not {mode!r}")
    return mode


def _memory_gb_hours(trace: TelemetryTrace, channel: str) -> float:
    # bytes held sample-and-hold, integrated to GB·h
    return trace.step_series(channel).energy() / BYTES_PER_GB


def _gpu_from_channel(trace: TelemetryTrace, notes: _Notes, missing_is_zero: bool):
    if trace.has_channel("gpu_power"):
        return trace.power_energy_wh("gpu_power")
    if missing_is_zero:
        notes.warn("no NVIDIA GPU power channel; GPU energy reported as 0")
        return 0.0
    notes.warn("no GPU power channel; GPU energy not measured")
    return None


def _interval_usage(trace: TelemetryTrace, channel: str, logical_cores: int) -> list[float]:
    """Per-interval CPU usage factor: Δcpu_time / (Δwall × logical cores)."""
    out = []
    for a, b in zip(trace.samples, trace.samples[1:]):
        dt = b.timestamp - a.timestamp
        out.append(_clamp01((getattr(b, channel) - getattr(a, channel)) / (dt * logical_cores)))
    return out


def _intervals(trace: TelemetryTrace) -> list[float]:
    return [b.timestamp - a.timestamp for a, b in zip(trace.samples, trace.samples[1:])]


# --------------------------------------------------------------------------
# scalar (calculator) strategies


def estimate_green_algorithms(
    spec: HardwareSpec,
    runtime: float,
    usage: Optional[UsageFactors] = None,
    catalog: Optional[HardwareCatalog] = None,
) -> EnergyBreakdown:
    """Green-Algorithms: TDP × usage factor × runtime per component.

    Missing usage factors default to 100%. Memory power is proportional to
    the memory *available* (requested, or the whole machine).
    """
    if not runtime > 0:
        raise ValueError("runtime must be positive")
    catalog = catalog or default_catalog()
    n = _Notes(Strategy.GA)
    hours = runtime / SECONDS_PER_HOUR
    cpu_tdp = catalog.lookup_cpu_tdp(
        spec.cpu.model_name, Strategy.GA, sockets=spec.cpu.sockets,
        cores=spec.cpu.physical_cores, user_tdp=spec.cpu.tdp_watts,
    )
    n.const("cpu_power_w", cpu_tdp.watts, cpu_tdp.provenance)
    if usage is None:
        cpu_u = n.const("cpu_usage", 1.0, STRATEGY_DEFAULT)
        gpu_u = n.const("gpu_usage", 1.0, STRATEGY_DEFAULT)
        mem_gb = n.const("memory_gb", spec.memory_total, HARDWARE)
    else:
        cpu_u = n.const("cpu_usage", usage.cpu_usage, usage.source)
        if usage.gpu_usage is None:
            gpu_u = n.const("gpu_usage", 1.0, STRATEGY_DEFAULT)
        else:
            gpu_u = n.const("gpu_usage", usage.gpu_usage, usage.source)
        if usage.memory_requested is not None:
            mem_gb = n.const("memory_gb", usage.memory_requested, USER)
        else:
            mem_gb = n.const("memory_gb", spec.memory_total, HARDWARE)
    cpu = cpu_tdp.watts * cpu_u * hours
    gpu = None
    if spec.gpus is not None:
        gpu_tdp = catalog.lookup_gpu_tdp(spec.gpus.model_name, Strategy.GA, user_tdp=spec.gpus.tdp_watts)
        n.const("gpu_tdp_w", gpu_tdp.watts, gpu_tdp.provenance)
        n.const("gpu_count", spec.gpus.count, HARDWARE)
        gpu = spec.gpus.count * gpu_tdp.watts * gpu_u * hours
    n.const("memory_w_per_gb", GA_MEMORY_W_PER_GB, STRATEGY_DEFAULT)
    memory = mem_gb * GA_MEMORY_W_PER_GB * hours
    return n.build(PROCESS, runtime, cpu_energy=cpu, gpu_energy=gpu, memory_energy=memory)


def estimate_mlco2(
    spec: HardwareSpec, runtime: float, catalog: Optional[HardwareCatalog] = None
) -> EnergyBreakdown:
    """ML CO2 Impact: every GPU at full TDP for the whole runtime.

    The upstream calculator handles a single GPU; the result is multiplied
    by the device count, recorded as ``gpu_count_multiplier``.
    """
    if runtime < 0:
        raise ValueError("runtime must be >= 0")
    if spec.gpus is None:
        raise UnknownGpuError("MLCO2 needs a GPU model")
    catalog = catalog or default_catalog()
    n = _Notes(Strategy.MLCO2)
    tdp = catalog.lookup_gpu_tdp(spec.gpus.model_name, Strategy.MLCO2)
    n.const("gpu_tdp_w", tdp.watts, tdp.provenance)
    n.const("gpu_count_multiplier", spec.gpus.count, HARDWARE)
    gpu = spec.gpus.count * tdp.watts * runtime / SECONDS_PER_HOUR
    return n.build(MACHINE, runtime, gpu_energy=gpu)


def estimate_cumulator(
    spec: HardwareSpec,
    runtime: float,
    component: str = "cpu",
    bytes_communicated: float = 0.0,
    catalog: Optional[HardwareCatalog] = None,
) -> EnergyBreakdown:
    """Cumulator: a single CPU or a single GPU at TDP, plus a per-byte
    communication cost."""
    if runtime < 0:
        raise ValueError("runtime must be >= 0")
    if bytes_communicated < 0:
        raise ValueError("bytes_communicated must be >= 0")
    if component not in ("cpu", "gpu"):
        raise ValueError("component must be 'cpu' or 'gpu'")
    catalog = catalog or default_catalog()
    n = _Notes(Strategy.CMLTR)
    hours = runtime / SECONDS_PER_HOUR
    cpu = gpu = None
    if component == "cpu":
        tdp = catalog.lookup_cpu_tdp(spec.cpu.model_name, Strategy.CMLTR, sockets=1,
                                     user_tdp=spec.cpu.tdp_watts)
        n.const("cpu_tdp_w", tdp.watts, tdp.provenance)
        cpu = tdp.watts * hours
    else:
        model = spec.gpus.model_name if spec.gpus else ""
        user = spec.gpus.tdp_watts if spec.gpus else None
        tdp = catalog.lookup_gpu_tdp(model, Strategy.CMLTR, user_tdp=user)
        n.const("gpu_tdp_w", tdp.watts, tdp.provenance)
        gpu = tdp.watts * hours
    n.const("bytes_communicated", bytes_communicated, USER)
    n.const("kwh_per_byte", BYTE_MODEL_KWH_PER_BYTE, STRATEGY_DEFAULT)
    comm = bytes_communicated * BYTE_MODEL_KWH_PER_BYTE * 1000.0
    return n.build(SCALAR, runtime, cpu_energy=cpu, gpu_energy=gpu, communication_energy=comm)


# --------------------------------------------------------------------------
# trace-driven strategies


def estimate_codecarbon(
    spec: HardwareSpec,
    trace: TelemetryTrace,
    mode: str = MACHINE,
    catalog: Optional[HardwareCatalog] = None,
) -> EnergyBreakdown:
    """CodeCarbon: RAPL package energy when readable, else TDP at 50%;
    GPU from the power channel; memory at 0.375 W per GB used."""
    _check_mode(mode)
    n = _Notes(Strategy.CC)
    runtime = trace.duration
    if trace.has_channel("rapl_package"):
        cpu = n.const("rapl_package_wh", trace.counter_energy_wh("rapl_package"), MEASURED)
    else:
        catalog = catalog or default_catalog()
        tdp = catalog.lookup_cpu_tdp(spec.cpu.model_name, Strategy.CC, sockets=spec.cpu.sockets,
                                     user_tdp=spec.cpu.tdp_watts)
        n.const("cpu_tdp_w", tdp.watts, tdp.provenance)
        n.const("cpu_usage", CC_TDP_USAGE, STRATEGY_DEFAULT)
        n.warn("RAPL counters unavailable; CPU estimated from TDP at 50% load")
        cpu = tdp.watts * CC_TDP_USAGE * runtime / SECONDS_PER_HOUR
    gpu = _gpu_from_channel(trace, n, missing_is_zero=True)
    mem_channel = "process_rss" if mode == PROCESS else "machine_memory_used"
    memory = None
    if trace.has_channel(mem_channel):
        n.const("memory_w_per_gb", CC_MEMORY_W_PER_GB, STRATEGY_DEFAULT)
        memory = CC_MEMORY_W_PER_GB * _memory_gb_hours(trace, mem_channel)
    else:
        n.warn(f"no {mem_channel} channel; memory energy not measured")
    return n.build(mode, runtime, cpu_energy=cpu, gpu_energy=gpu, memory_energy=memory)


def estimate_eco2ai(
    spec: HardwareSpec,
    trace: TelemetryTrace,
    mode: str = PROCESS,
    catalog: Optional[HardwareCatalog] = None,
) -> EnergyBreakdown:
    """Eco2AI: CPU TDP scaled by a CPU-time usage factor, GPU from the
    power channel, memory at 0.375 W per GB used."""
    _check_mode(mode)
    time_channel = "process_cpu_time" if mode == PROCESS else "machine_cpu_time"
    trace.require(time_channel, "Eco2AI derives its CPU usage factor from CPU time")
    catalog = catalog or default_catalog()
    n = _Notes(Strategy.E2)
    tdp = catalog.lookup_cpu_tdp(spec.cpu.model_name, Strategy.E2, sockets=spec.cpu.sockets,
                                 user_tdp=spec.cpu.tdp_watts)
    n.const("cpu_tdp_w", tdp.watts, tdp.provenance)
    n.const("logical_cores", spec.cpu.logical_cores, HARDWARE)
    usage = _interval_usage(trace, time_channel, spec.cpu.logical_cores)
    busy_seconds = math.fsum(u * dt for u, dt in zip(usage, _intervals(trace)))
    cpu = tdp.watts * busy_seconds / SECONDS_PER_HOUR
    gpu = _gpu_from_channel(trace, n, missing_is_zero=True)
    mem_channel = "process_rss" if mode == PROCESS else "machine_memory_used"
    memory = None
    if trace.has_channel(mem_channel):
        n.const("memory_w_per_gb", E2_MEMORY_W_PER_GB, STRATEGY_DEFAULT)
        memory = E2_MEMORY_W_PER_GB * _memory_gb_hours(trace, mem_channel)
    else:
        n.warn(f"no {mem_channel} channel; memory energy not measured")
    return n.build(mode, trace.duration, cpu_energy=cpu, gpu_energy=gpu, memory_energy=memory)


def estimate_carbontracker(spec: HardwareSpec, trace: TelemetryTrace) -> EnergyBreakdown:
    """CarbonTracker: whole-machine RAPL package + DRAM and GPU power."""
    has_rapl = trace.has_channel("rapl_package")
    has_gpu = trace.has_channel("gpu_power")
    if not (has_rapl or has_gpu):
        raise NoMeasurableComponentError(
            "CarbonTracker needs RAPL counters or a GPU power channel")
    n = _Notes(Strategy.CT)
    cpu = memory = gpu = None
    if has_rapl:
        cpu = trace.counter_energy_wh("rapl_package")
        if trace.has_channel("rapl_dram"):
            memory = trace.counter_energy_wh("rapl_dram")
        else:
            n.warn("no RAPL DRAM domain; memory not measured")
    else:
        n.warn("no RAPL counters; CPU and memory not measured")
    if has_gpu:
        gpu = trace.power_energy_wh("gpu_power")
    else:
        n.warn("no GPU power channel; GPU not measured")
    return n.build(MACHINE, trace.duration, cpu_energy=cpu, gpu_energy=gpu, memory_energy=memory)


def estimate_eit(spec: HardwareSpec, trace: TelemetryTrace) -> EnergyBreakdown:
    """Experiment-Impact-Tracker: machine energies attributed to the process.

    Per sampling interval: RAPL package energy × the process CPU usage
    factor; GPU power × GPU utilization; DRAM energy × RSS / used memory.
    """
    if not trace.has_channel("rapl_package"):
        raise RaplRequiredError("Experiment-Impact-Tracker cannot run without RAPL counters")
    trace.require("process_cpu_time", "EIT needs the process CPU usage factor")
    n = _Notes(Strategy.EIT)
    n.const("logical_cores", spec.cpu.logical_cores, HARDWARE)
    usage = _interval_usage(trace, "process_cpu_time", spec.cpu.logical_cores)
    pkg = trace.counter_deltas("rapl_package")
    cpu = math.fsum(e * u for e, u in zip(pkg, usage)) / UJ_PER_WH

    gpu = None
    if trace.has_channel("gpu_power"):
        if trace.has_channel("gpu_utilization"):
            parts = []
            for a, b in zip(trace.samples, trace.samples[1:]):
                dt = b.timestamp - a.timestamp
                parts.extend(p / 1000.0 * u * dt for p, u in zip(a.gpu_power, a.gpu_utilization))
            gpu = math.fsum(parts) / SECONDS_PER_HOUR
        else:
            n.warn("no GPU utilization channel; GPU energy cannot be attributed")
    else:
        n.warn("no GPU power channel; GPU not measured")

    memory = None
    if trace.has_channel("rapl_dram"):
        if trace.has_channel("process_rss") and trace.has_channel("machine_memory_used"):
            dram = trace.counter_deltas("rapl_dram")
            shares = [
                _clamp01(s.process_rss / s.machine_memory_used) if s.machine_memory_used > 0 else 0.0
                for s in trace.samples[:-1]
            ]
            memory = math.fsum(e * f for e, f in zip(dram, shares)) / UJ_PER_WH
        else:
            n.warn("no process/machine memory channels; DRAM energy cannot be attributed")
    else:
        n.warn("no RAPL DRAM domain; memory not measured")
    return n.build(PROCESS, trace.duration, cpu_energy=cpu, gpu_energy=gpu, memory_energy=memory)


def compute_usage_factors(trace: TelemetryTrace, logical_cores: Optional[int] = None) -> UsageFactors:
    """Whole-run CPU and GPU usage factors of the tracked process.

    CPU: process CPU time over wall time × logical cores. GPU: plain mean
    of the utilization readings over all samples and devices.
    """
    trace.require("process_cpu_time", "CPU usage factor needs process CPU time")
    cores = logical_cores or trace.hardware.cpu.logical_cores
    first, last = trace.samples[0], trace.samples[-1]
    cpu = _clamp01((last.process_cpu_time - first.process_cpu_time) / (trace.duration * cores))
    gpu = None
    if trace.has_channel("gpu_utilization"):
        values = [u for s in trace.samples for u in s.gpu_utilization]
        gpu = _clamp01(math.fsum(values) / len(values)) if values else None
    return UsageFactors(cpu_usage=cpu, gpu_usage=gpu, source=MEASURED)


# --------------------------------------------------------------------------
# dispatch


@dataclass(frozen=True)
class EstimateOptions:
    """Knobs for running strategies over a trace in one go."""

    usage: Optional[UsageFactors] = None  # GA; None derives them from the trace
    cumulator_component: str = "cpu"
    bytes_communicated: float = 0.0
    catalog: Optional[HardwareCatalog] = field(default=None, compare=False)


def estimate_trace(
    strategy, trace: TelemetryTrace, options: EstimateOptions = EstimateOptions()
) -> list[EnergyBreakdown]:
    """Run one strategy over ``trace``; CC and E2 yield a process row and a
    machine row."""
    strategy = Strategy.parse(strategy)
    spec = trace.hardware
    cat = options.catalog
    if strategy is Strategy.GA:
        usage = options.usage
        if usage is None and trace.has_channel("process_cpu_time"):
            usage = compute_usage_factors(trace)
        return [estimate_green_algorithms(spec, trace.duration, usage, cat)]
    if strategy is Strategy.CC:
        return [estimate_codecarbon(spec, trace, PROCESS, cat),
                estimate_codecarbon(spec, trace, MACHINE, cat)]
    if strategy is Strategy.E2:
        return [estimate_eco2ai(spec, trace, PROCESS, cat),
                estimate_eco2ai(spec, trace, MACHINE, cat)]
    if strategy is Strategy.CT:
        return [estimate_carbontracker(spec, trace)]
    if strategy is Strategy.EIT:
        return [estimate_eit(spec, trace)]
    if strategy is Strategy.MLCO2:
        return [estimate_mlco2(spec, trace.duration, cat)]
    return [estimate_cumulator(spec, trace.duration, options.cumulator_component,
                               options.bytes_communicated, cat)]


ALL_STRATEGIES = tuple(Strategy)
