"""Hardware descriptions, TDP datasets and per-strategy default constants.

The two CSV datasets shipped in ``ecotrace/data`` (``cpu_tdp.csv`` and
``gpu_tdp.csv``) map a processor model name to its thermal design power.
Model names are matched exactly after normalization (see
:func:`normalize_model`); there is no fuzzy matching.
"""

from __future__ import annotations

import csv
import enum
import re
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from .errors import (
    CatalogError,
    CatalogParseError,
    EmptyCatalogError,
    UnknownGpuError,
    UnsupportedStrategyError,
)

CATALOG = "catalog"
STRATEGY_DEFAULT = "strategy-default"
USER = "user"
MEASURED = "measured"
OVERRIDE = "override"


class Strategy(str, enum.Enum):
    GA = "GA"  # Green-Algorithms
    CC = "CC"  # CodeCarbon
    E2 = "E2"  # Eco2AI
    CT = "CT"  # CarbonTracker
    EIT = "EIT"  # Experiment-Impact-Tracker
    MLCO2 = "MLCO2"
    CMLTR = "CMLTR"  # Cumulator

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        key = value.strip().upper().replace("-", "").replace("_", "")
        aliases = {
            "GREENALGORITHMS": "GA",
            "CODECARBON": "CC",
            "ECO2AI": "E2",
            "CARBONTRACKER": "CT",
            "EXPERIMENTIMPACTTRACKER": "EIT",
            "CUMULATOR": "CMLTR",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise UnsupportedStrategyError(f"unknown strategy {value!r}") from None


class Constant(NamedTuple):
    """A number used in an estimate, with where it came from."""

    name: str
    value: float
    provenance: str


@dataclass(frozen=True)
class StrategyDefaults:
    """Default constants a strategy falls back on.

    ``None`` means the strategy has no such default (e.g. CarbonTracker has
    no CPU TDP path, MLCO2 has no default carbon intensity).
    """

    strategy_id: Strategy
    default_cpu_tdp: Optional[float]
    cpu_tdp_basis: str  # "per-core" or "per-chip"
    default_gpu_tdp: Optional[float]
    default_cpu_usage: float
    default_pue: float
    default_ci: Optional[float]
    sampling_interval: Optional[float]

    def __post_init__(self):
        for name in ("default_cpu_tdp", "default_gpu_tdp", "default_pue", "default_ci",
                     "sampling_interval"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 < self.default_cpu_usage <= 1:
            raise ValueError("default_cpu_usage must be in (0, 1]")
        if self.cpu_tdp_basis not in ("per-core", "per-chip"):
            raise ValueError(f"bad TDP basis {self.cpu_tdp_basis!r}")


STRATEGY_DEFAULTS: dict[Strategy, StrategyDefaults] = {
    s.strategy_id: s
    for s in (
        StrategyDefaults(Strategy.GA, 12.0, "per-core", 200.0, 1.0, 1.67, 475.0, None),
        StrategyDefaults(Strategy.CC, 85.0, "per-chip", None, 0.5, 1.0, 475.0, 15.0),
        StrategyDefaults(Strategy.E2, 100.0, "per-chip", None, 1.0, 1.0, 436.5, 10.0),
        StrategyDefaults(Strategy.CT, None, "per-chip", None, 1.0, 1.55, 475.0, 10.0),
        StrategyDefaults(Strategy.EIT, None, "per-chip", None, 1.0, 1.58, 301.0, 10.0),
        StrategyDefaults(Strategy.MLCO2, None, "per-chip", None, 1.0, 1.0, None, None),
        StrategyDefaults(Strategy.CMLTR, 250.0, "per-chip", 250.0, 1.0, 1.0, 447.0, None),
    )
}


def strategy_defaults(strategy) -> StrategyDefaults:
    return STRATEGY_DEFAULTS[Strategy.parse(strategy)]


# --------------------------------------------------------------------------
# hardware description


@dataclass(frozen=True)
class CpuSpec:
    model_name: str
    sockets: int = 1
    cores_per_socket: int = 1
    logical_cores: Optional[int] = None
    tdp_watts: Optional[float] = None  # per chip, user supplied
    hyperthreading: bool = False

    def __post_init__(self):
        if self.sockets < 1:
            raise ValueError("sockets must be >= 1")
        if self.cores_per_socket < 1:
            raise ValueError("cores_per_socket must be >= 1")
        if self.logical_cores is None:
            object.__setattr__(self, "logical_cores", self.physical_cores)
        if self.logical_cores < self.physical_cores:
            raise ValueError("logical_cores must be >= sockets * cores_per_socket")
        if self.tdp_watts is not None and self.tdp_watts <= 0:
            raise ValueError("tdp_watts must be positive when known")

    @property
    def physical_cores(self) -> int:
        return self.sockets * self.cores_per_socket


@dataclass(frozen=True)
class GpuSpec:
    model_name: str
    count: int = 1
    tdp_watts: Optional[float] = None  # per device, user supplied
    vendor_supports_power_query: bool = True

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("GPU count must be >= 1")
        if self.tdp_watts is not None and self.tdp_watts <= 0:
            raise ValueError("tdp_watts must be positive when known")


@dataclass(frozen=True)
class HardwareSpec:
    cpu: CpuSpec
    memory_total: float  # GB
    gpus: Optional[GpuSpec] = None
    pue: float = 1.0
    region_code: str = ""

    def __post_init__(self):
        if self.memory_total <= 0:
            raise ValueError("memory_total must be positive")
        if self.pue < 1.0:
            raise ValueError("pue must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareSpec":
        gpus = data.get("gpus")
        return cls(
            cpu=CpuSpec(**data["cpu"]),
            memory_total=float(data["memory_total"]),
            gpus=GpuSpec(**gpus) if gpus else None,
            pue=float(data.get("pue", 1.0)),
            region_code=data.get("region_code", "") or "",
        )


# --------------------------------------------------------------------------
# TDP datasets

_MARKS = re.compile(r"\((r|tm)\)|®|™", re.IGNORECASE)


def normalize_model(name: str) -> str:
    """Lowercase, drop (R)/(TM) marks and collapse whitespace."""
    name = _MARKS.sub(" ", name)
    return " ".join(name.lower().split())


@dataclass(frozen=True)
class TdpEntry:
    model: str
    tdp_watts: float
    cores: Optional[int] = None


class TdpLookup(NamedTuple):
    """Result of a TDP lookup.

    ``watts`` is the power the estimator should use for the whole resolved
    unit set (all sockets, or all cores for a per-core default).
    """

    watts: float
    provenance: str
    per_unit: float
    units: int
    basis: str


def _data_path(name: str) -> Path:
    return Path(str(resources.files("ecotrace").joinpath("data", name)))


def _read_tdp_csv(path, with_cores: bool) -> dict[str, TdpEntry]:
    path = Path(path)
    entries: dict[str, TdpEntry] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [(n, ln) for n, ln in enumerate(fh, start=1)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise EmptyCatalogError(f"{path}: catalog is empty")
    header_no, header_line = lines[0]
    header = [h.strip() for h in next(csv.reader([header_line]))]
    if header[:2] != ["model", "tdp_watts"]:
        raise CatalogParseError(path, header_no, f"unexpected header {header}")
    rows = lines[1:]
    if not rows:
        raise EmptyCatalogError(f"{path}: catalog has a header but no rows")
    for lineno, line in rows:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) < 2 or len(fields) > len(header):
            raise CatalogParseError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
        model, raw_tdp = fields[0], fields[1]
        if not model:
            raise CatalogParseError(path, lineno, "empty model name")
        try:
            tdp = float(raw_tdp)
        except ValueError:
            raise CatalogParseError(path, lineno, f"bad tdp_watts {raw_tdp!r}") from None
        if not tdp > 0:
            raise CatalogParseError(path, lineno, f"tdp_watts must be positive, got {tdp}")
        cores = None
        if with_cores and len(fields) > 2 and fields[2]:
            try:
                cores = int(fields[2])
            except ValueError:
                raise CatalogParseError(path, lineno, f"bad cores {fields[2]!r}") from None
            if cores < 1:
                raise CatalogParseError(path, lineno, "cores must be >= 1")
        key = normalize_model(model)
        if key in entries:
            warnings.warn(
                f"{path}:{lineno}: duplicate model {model!r}; "
                f"{tdp:g} W replaces {entries[key].tdp_watts:g} W",
                stacklevel=3,
            )
        entries[key] = TdpEntry(model, tdp, cores)
    return entries


class HardwareCatalog:
    """Immutable CPU/GPU model -> TDP mapping."""

    def __init__(self, cpus: dict[str, TdpEntry], gpus: dict[str, TdpEntry]):
        self._cpus = dict(cpus)
        self._gpus = dict(gpus)

    def __repr__(self):
        return f"HardwareCatalog({len(self._cpus)} cpus, {len(self._gpus)} gpus)"

    def cpu(self, model_name: str) -> Optional[TdpEntry]:
        return self._cpus.get(normalize_model(model_name or ""))

    def gpu(self, model_name: str) -> Optional[TdpEntry]:
        return self._gpus.get(normalize_model(model_name or ""))

    @property
    def cpu_models(self) -> list[str]:
        return sorted(e.model for e in self._cpus.values())

    @property
    def gpu_models(self) -> list[str]:
        return sorted(e.model for e in self._gpus.values())

    def lookup_cpu_tdp(
        self,
        model_name: str,
        strategy,
        *,
        sockets: int = 1,
        cores: Optional[int] = None,
        user_tdp: Optional[float] = None,
    ) -> TdpLookup:
        """Resolve the CPU power a strategy would use.

        Resolution order: catalog hit, then a user-supplied per-chip TDP,
        then the strategy default. Per-chip values are multiplied by
        ``sockets``; the Green-Algorithms default is per core and is
        multiplied by ``cores`` instead.
        """
        strategy = Strategy.parse(strategy)
        defaults = STRATEGY_DEFAULTS[strategy]
        if defaults.default_cpu_tdp is None:
            raise UnsupportedStrategyError(f"{strategy} has no CPU model/TDP path")
        entry = self.cpu(model_name)
        if entry is not None:
            return TdpLookup(entry.tdp_watts * sockets, CATALOG, entry.tdp_watts, sockets, "per-chip")
        if user_tdp is not None:
            if user_tdp <= 0:
                raise CatalogError("user TDP must be positive")
            return TdpLookup(user_tdp * sockets, USER, user_tdp, sockets, "per-chip")
        if defaults.cpu_tdp_basis == "per-core":
            if cores is None or cores < 1:
                raise CatalogError(f"{strategy} per-core default needs a core count")
            per = defaults.default_cpu_tdp
            return TdpLookup(per * cores, STRATEGY_DEFAULT, per, cores, "per-core")
        per = defaults.default_cpu_tdp
        return TdpLookup(per * sockets, STRATEGY_DEFAULT, per, sockets, "per-chip")

    def lookup_gpu_tdp(
        self, model_name: str, strategy, *, user_tdp: Optional[float] = None
    ) -> TdpLookup:
        """Resolve the per-device GPU TDP a strategy would use."""
        strategy = Strategy.parse(strategy)
        entry = self.gpu(model_name)
        if entry is not None:
            return TdpLookup(entry.tdp_watts, CATALOG, entry.tdp_watts, 1, "per-device")
        if strategy is Strategy.MLCO2:
            # upstream only accepts listed models
            raise UnknownGpuError(f"GPU model {model_name!r} is not listed; cannot load its TDP")
        if user_tdp is not None:
            return TdpLookup(user_tdp, USER, user_tdp, 1, "per-device")
        default = STRATEGY_DEFAULTS[strategy].default_gpu_tdp
        if default is None:
            raise UnsupportedStrategyError(f"{strategy} has no GPU model/TDP path")
        return TdpLookup(default, STRATEGY_DEFAULT, default, 1, "per-device")


def load_catalog(cpu_path=None, gpu_path=None) -> HardwareCatalog:
    """Load the CPU and GPU TDP datasets; ``None`` selects the bundled file."""
    cpus = _read_tdp_csv(cpu_path or _data_path("cpu_tdp.csv"), with_cores=True)
    gpus = _read_tdp_csv(gpu_path or _data_path("gpu_tdp.csv"), with_cores=False)
    return HardwareCatalog(cpus, gpus)


_default_catalog: Optional[HardwareCatalog] = None


def default_catalog() -> HardwareCatalog:
    global _default_catalog
    if _default_catalog is None:
        _default_catalog = load_catalog()
    return _default_catalog


def lookup_cpu_tdp(catalog: HardwareCatalog, model_name: str, strategy, **kw) -> TdpLookup:
    return catalog.lookup_cpu_tdp(model_name, strategy, **kw)


def lookup_gpu_tdp(catalog: HardwareCatalog, model_name: str, strategy, **kw) -> TdpLookup:
    return catalog.lookup_gpu_tdp(model_name, strategy, **kw)


def parse_strategies(values: Iterable) -> list[Strategy]:
    out = []
    for v in values:
        s = Strategy.parse(v)
        if s not in out:
            out.append(s)
    return out
