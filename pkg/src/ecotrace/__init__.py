"""Energy and carbon accounting for compute jobs.

Seven estimation strategies (GA, CC, E2, CT, EIT, MLCO2, CMLTR) run over
recorded telemetry traces or plain hardware descriptions; the footprint
layer turns their energy into emissions.
"""

__version__ = "0.1.0"

from .catalog import (
    CpuSpec,
    GpuSpec,
    HardwareCatalog,
    HardwareSpec,
    Strategy,
    load_catalog,
    lookup_cpu_tdp,
    lookup_gpu_tdp,
)
from .estimators import (
    EnergyBreakdown,
    EstimateOptions,
    UsageFactors,
    estimate_carbontracker,
    estimate_codecarbon,
    estimate_cumulator,
    estimate_eco2ai,
    estimate_eit,
    estimate_green_algorithms,
    estimate_mlco2,
    estimate_trace,
)
from .footprint import (
    CarbonIntensityRecord,
    EmissionReport,
    apply_pue,
    build_report,
    emissions,
    energy_from_emissions,
    load_carbon_table,
    lookup_carbon_intensity,
    scale_runs,
    storage_footprint,
    transfer_footprint,
)
from .analysis import (
    ComparisonRow,
    EpochProfile,
    compare_to_wattmeter,
    extrapolate,
    idle_baseline,
    overhead_report,
    split_by_epochs,
)
from .telemetry import PowerSample, TelemetryTrace, load_trace, save_trace
