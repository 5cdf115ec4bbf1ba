"""From energy to emissions: PUE, carbon intensity, scaling and the
auxiliary transfer/storage footprints."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol

from .catalog import (
    OVERRIDE,
    STRATEGY_DEFAULT,
    USER,
    Constant,
    Strategy,
    _data_path,
    strategy_defaults,
)
from .errors import (
    CatalogParseError,
    EmptyCatalogError,
    IntensityNotFoundError,
    IntensityRequiredError,
    InvalidFactorError,
    InvalidPueError,
)
from .estimators import EnergyBreakdown

TABLE = "carbon-table"

TRANSFER_KWH_PER_GB = 0.023
STORAGE_KG_PER_TB_YEAR = 10.0
STORAGE_WH_PER_GB_YEAR = 52.0
GB_PER_TB = 1024

# year the default intensity refers to, when the source states one
_DEFAULT_CI_META = {
    Strategy.GA: (2018, "world average"),
    Strategy.CC: (2018, "world average"),
    Strategy.E2: (None, "Ember global electricity review"),
    Strategy.CT: (2019, "world average"),
    Strategy.EIT: (None, "mean of all electricityMap zones"),
    Strategy.CMLTR: (2018, "EU average"),
}


@dataclass(frozen=True)
class CarbonIntensityRecord:
    region_code: str
    intensity: float  # gCO2eq/kWh
    year: Optional[int]
    source: str

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError("carbon intensity must be positive")


class CarbonIntensityTable:
    """Region code -> :class:`CarbonIntensityRecord`, case-insensitive."""

    def __init__(self, records=()):
        self._records = {r.region_code.upper(): r for r in records}

    def __len__(self):
        return len(self._records)

    def __contains__(self, region):
        return region is not None and region.upper() in self._records

    def get(self, region: Optional[str]) -> Optional[CarbonIntensityRecord]:
        if not region:
            return None
        return self._records.get(region.upper())

    def regions(self) -> list[str]:
        return sorted(r.region_code for r in self._records.values())


def _csv_rows(path: Path, header: list[str]):
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [(n, ln) for n, ln in enumerate(fh, start=1)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise EmptyCatalogError(f"{path}: file is empty")
    hno, hline = lines[0]
    got = [h.strip() for h in next(csv.reader([hline]))]
    if got != header:
        raise CatalogParseError(path, hno, f"expected header {header}, got {got}")
    for lineno, line in lines[1:]:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != len(header):
            raise CatalogParseError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
        yield lineno, fields


def load_carbon_table(path=None) -> CarbonIntensityTable:
    path = Path(path) if path else _data_path("carbon_intensity.csv")
    records = []
    for lineno, (region, raw, year, source) in _csv_rows(
        path, ["region_code", "intensity_g_per_kwh", "year", "source"]
    ):
        if not region:
            raise CatalogParseError(path, lineno, "empty region_code")
        try:
            records.append(CarbonIntensityRecord(region, float(raw), int(year) if year else None, source))
        except ValueError as exc:
            raise CatalogParseError(path, lineno, str(exc)) from None
    return CarbonIntensityTable(records)


def lookup_carbon_intensity(
    table: CarbonIntensityTable, region_code: Optional[str], strategy
) -> CarbonIntensityRecord:
    """Region record when the table has it, else the strategy's default.

    MLCO2 has no default; it needs a known region or an explicit value.
    """
    strategy = Strategy.parse(strategy)
    rec = table.get(region_code)
    if rec is not None:
        return rec
    default = strategy_defaults(strategy).default_ci
    if default is None:
        raise IntensityRequiredError(
            f"{strategy} has no default carbon intensity; give a known region or an explicit value"
            + (f" (region {region_code!r} not in table)" if region_code else "")
        )
    year, what = _DEFAULT_CI_META[strategy]
    return CarbonIntensityRecord(region_code or "", default, year, f"{strategy} default ({what})")


# --------------------------------------------------------------------------
# pluggable intensity providers


class IntensityProvider(Protocol):
    def intensity(self, region: str, when=None) -> CarbonIntensityRecord: ...


class StaticTableProvider:
    """Yearly-average table; the time argument is ignored."""

    def __init__(self, table: CarbonIntensityTable):
        self.table = table

    def intensity(self, region: str, when=None) -> CarbonIntensityRecord:
        rec = self.table.get(region)
        if rec is None:
            raise IntensityNotFoundError(f"region {region!r} not in table")
        return rec


def _as_date(when) -> str:
    if isinstance(when, dt.datetime):
        return when.date().isoformat()
    if isinstance(when, dt.date):
        return when.isoformat()
    return dt.date.fromisoformat(str(when)[:10]).isoformat()


class FixtureProvider:
    """Daily intensities read from a ``region_code,date,intensity_g_per_kwh``
    file, standing in for a real-time grid API."""

    def __init__(self, path=None):
        self.path = Path(path) if path else _data_path("intensity_fixture.csv")
        self._rows: dict[tuple[str, str], float] = {}
        for lineno, (region, date, raw) in _csv_rows(
            self.path, ["region_code", "date", "intensity_g_per_kwh"]
        ):
            try:
                self._rows[(region.upper(), _as_date(date))] = float(raw)
            except ValueError as exc:
                raise CatalogParseError(self.path, lineno, str(exc)) from None

    def intensity(self, region: str, when=None) -> CarbonIntensityRecord:
        if when is None:
            raise IntensityNotFoundError("fixture provider needs a date")
        day = _as_date(when)
        value = self._rows.get((region.upper(), day))
        if value is None:
            raise IntensityNotFoundError(f"no fixture value for {region!r} on {day}")
        return CarbonIntensityRecord(region, value, int(day[:4]), f"fixture {self.path.name} {day}")


def intensity_provider(provider: IntensityProvider, region: str, when=None) -> CarbonIntensityRecord:
    return provider.intensity(region, when)


# --------------------------------------------------------------------------
# arithmetic


def apply_pue(energy: float, strategy, override: Optional[float] = None) -> tuple[float, float]:
    """Scale IT energy (Wh) by the override PUE or the strategy default."""
    if energy < 0:
        raise ValueError("energy must be >= 0")
    if override is not None:
        if not override >= 1.0:
            raise InvalidPueError(f"PUE must be >= 1, got {override}")
        pue = override
    else:
        pue = strategy_defaults(strategy).default_pue
    return energy * pue, pue


def emissions(energy_wh: float, intensity: float) -> float:
    """gCO2eq for ``energy_wh`` at ``intensity`` gCO2eq/kWh."""
    if energy_wh < 0 or intensity < 0:
        raise ValueError("energy and intensity must be >= 0")
    return energy_wh / 1000.0 * intensity


def energy_from_emissions(ghg: float, intensity: float) -> float:
    """Back out energy in kWh from reported gCO2eq (Cumulator only reports
    emissions)."""
    if intensity == 0:
        raise ZeroDivisionError("carbon intensity is zero")
    return ghg / intensity


def transfer_footprint(size_gb: float) -> float:
    """kWh to move ``size_gb`` over the IP core network."""
    if size_gb < 0:
        raise ValueError("size must be >= 0")
    return size_gb * TRANSFER_KWH_PER_GB


def storage_footprint(size_tb: float, years: float) -> tuple[float, float]:
    """(kgCO2eq, kWh) for keeping ``size_tb`` stored for ``years``."""
    if size_tb < 0 or years < 0:
        raise ValueError("size and duration must be >= 0")
    kg = size_tb * years * STORAGE_KG_PER_TB_YEAR
    kwh = size_tb * GB_PER_TB * years * STORAGE_WH_PER_GB_YEAR / 1000.0
    return kg, kwh


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class EmissionReport:
    """Energy after PUE and the emissions it causes.

    ``energy_with_pue`` is for one run; ``scaled_energy`` and ``emissions``
    include ``scaling_factor`` (repeated runs).
    """

    breakdown: EnergyBreakdown
    pue_applied: float
    energy_with_pue: float  # Wh, one run
    carbon_intensity: CarbonIntensityRecord
    emissions: float  # gCO2eq, all runs
    scaling_factor: float = 1.0
    constants_used: tuple[Constant, ...] = field(default=())

    @property
    def scaled_energy(self) -> float:
        return self.energy_with_pue * self.scaling_factor


def build_report(
    breakdown: EnergyBreakdown,
    *,
    table: Optional[CarbonIntensityTable] = None,
    region: Optional[str] = None,
    pue: Optional[float] = None,
    ci: Optional[float] = None,
    provider: Optional[IntensityProvider] = None,
    when=None,
    scaling_factor: float = 1.0,
) -> EmissionReport:
    """Apply PUE and carbon intensity to one breakdown.

    Intensity precedence: explicit ``ci``, then ``provider`` (for ``when``),
    then ``table`` lookup (the bundled table when ``None``) with the
    strategy default as fallback.
    """
    if not scaling_factor >= 1:
        raise InvalidFactorError(f"scaling factor must be >= 1, got {scaling_factor}")
    strategy = breakdown.strategy_id
    energy, pue_used = apply_pue(breakdown.total_energy, strategy, pue)
    if ci is not None:
        record = CarbonIntensityRecord(region or "", ci, None, "user")
        ci_prov = USER
    elif provider is not None:
        record = provider.intensity(region, when)
        ci_prov = TABLE
    else:
        table = table if table is not None else load_carbon_table()
        record = lookup_carbon_intensity(table, region, strategy)
        ci_prov = TABLE if region and record.region_code and region in table else STRATEGY_DEFAULT
    constants = list(breakdown.constants_used)
    constants.append(Constant("pue", pue_used, OVERRIDE if pue is not None else STRATEGY_DEFAULT))
    constants.append(Constant("carbon_intensity_g_per_kwh", record.intensity, ci_prov))
    constants.append(Constant("scaling_factor", scaling_factor, USER if scaling_factor != 1 else STRATEGY_DEFAULT))
    ghg = emissions(energy, record.intensity) * scaling_factor
    return EmissionReport(breakdown, pue_used, energy, record, ghg, scaling_factor, tuple(constants))


def scale_runs(report: EmissionReport, factor: float) -> EmissionReport:
    """Model ``factor`` repetitions of the same run."""
    if not factor >= 1:
        raise InvalidFactorError(f"scaling factor must be >= 1, got {factor}")
    total = report.scaling_factor * factor
    constants = [c for c in report.constants_used if c.name != "scaling_factor"]
    constants.append(Constant("scaling_factor", total, USER if total != 1 else STRATEGY_DEFAULT))
    return replace(report, emissions=report.emissions * factor, scaling_factor=total,
                   constants_used=tuple(constants))

