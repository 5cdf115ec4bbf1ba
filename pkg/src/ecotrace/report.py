"""Report records and their JSON-lines, CSV and human renderings.

Every record is a flat mapping with a ``kind`` field; numbers are rounded to
six significant digits so that output is byte-stable across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional

from .analysis import ComparisonRow, IdleResult, OverheadResult
from .errors import EcotraceError
from .footprint import EmissionReport

REPORT_SCHEMA_VERSION = 1
FORMATS = ("jsonl", "csv", "human")

CSV_COLUMNS = (
    "schema_version", "kind", "strategy", "mode", "duration_s",
    "cpu_wh", "gpu_wh", "memory_wh", "communication_wh", "energy_wo_pue_wh",
    "pue", "energy_with_pue_wh", "scaling_factor", "region",
    "carbon_intensity_g_per_kwh", "intensity_source", "emissions_g",
    "wattmeter_wh", "percentage", "idle_power_w", "active_energy_wh",
    "dynamic_energy_wh", "idle_fraction", "extra_time_s", "raw_extra_time_s",
    "extra_energy_wh", "overload", "error", "message", "constants_used", "warnings",
)


def sig6(x) -> Optional[float]:
    """Round to six significant digits; ``None`` and NaN become ``None``."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return None
    return float(f"{x:.6g}")


def _constants(constants) -> list[dict]:
    return [{"name": c.name, "value": sig6(c.value), "provenance": c.provenance} for c in constants]


def _record(kind: str, **fields) -> dict:
    return {"schema_version": REPORT_SCHEMA_VERSION, "kind": kind, **fields}


def emission_record(report: EmissionReport) -> dict:
    b = report.breakdown
    ci = report.carbon_intensity
    return _record(
        "emission",
        strategy=b.label,
        mode=b.mode,
        duration_s=sig6(b.duration),
        cpu_wh=sig6(b.cpu_energy),
        gpu_wh=sig6(b.gpu_energy),
        memory_wh=sig6(b.memory_energy),
        communication_wh=sig6(b.communication_energy),
        energy_wo_pue_wh=sig6(b.total_energy),
        pue=sig6(report.pue_applied),
        energy_with_pue_wh=sig6(report.energy_with_pue),
        scaling_factor=sig6(report.scaling_factor),
        region=ci.region_code,
        carbon_intensity_g_per_kwh=sig6(ci.intensity),
        intensity_source=ci.source,
        emissions_g=sig6(report.emissions),
        constants_used=_constants(report.constants_used),
        warnings=list(b.warnings),
    )


def error_record(strategy: str, exc: BaseException) -> dict:
    return _record("error", strategy=strategy, error=type(exc).__name__, message=str(exc))


def comparison_record(row: ComparisonRow) -> dict:
    return _record(
        "comparison",
        strategy=row.strategy_id,
        energy_wo_pue_wh=sig6(row.energy_wo_pue),
        wattmeter_wh=sig6(row.wattmeter_energy),
        percentage=sig6(row.percentage),
    )


def idle_record(result: IdleResult) -> dict:
    return _record(
        "idle",
        idle_power_w=sig6(result.idle_power),
        active_energy_wh=sig6(result.active_energy),
        duration_s=sig6(result.active_duration),
        dynamic_energy_wh=sig6(result.dynamic_energy),
        idle_fraction=sig6(result.idle_fraction),
    )


def overhead_record(result: OverheadResult) -> dict:
    return _record(
        "overhead",
        extra_time_s=sig6(result.extra_time),
        raw_extra_time_s=sig6(result.raw_extra_time),
        extra_energy_wh=sig6(result.extra_energy),
        overload=sig6(result.overload),
    )


# --------------------------------------------------------------------------
# rendering


def to_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        if value and isinstance(value[0], dict):
            return ";".join(f"{c['name']}={_cell(c['value'])}[{c['provenance']}]" for c in value)
        return ";".join(str(v) for v in value)
    return str(value)


def to_csv(records: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_cell(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]

    def line(r):
        return "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))

    out = [line(header), "  ".join("-" * w for w in widths)]
    return out + [line(r) for r in rows]


_HUMAN_ROWS = (
    ("CPU (Wh)", "cpu_wh"),
    ("GPU (Wh)", "gpu_wh"),
    ("Memory (Wh)", "memory_wh"),
    ("Communication (Wh)", "communication_wh"),
    ("Energy w/o PUE (Wh)", "energy_wo_pue_wh"),
    ("PUE", "pue"),
    ("Energy (Wh)", "energy_with_pue_wh"),
    ("Scaling factor", "scaling_factor"),
    ("Intensity (g/kWh)", "carbon_intensity_g_per_kwh"),
    ("Emissions (gCO2eq)", "emissions_g"),
)


def to_human(records: Iterable[dict]) -> str:
    records = list(records)
    out: list[str] = []
    emissions = [r for r in records if r["kind"] == "emission"]
    if emissions:
        header = [""] + [r["strategy"] for r in emissions]
        rows = [[name] + [_cell(r.get(key)) or "-" for r in emissions] for name, key in _HUMAN_ROWS]
        out += _table(header, rows)
        warned = [(r["strategy"], w) for r in emissions for w in r.get("warnings", [])]
        for strategy, w in warned:
            out.append(f"note {strategy}: {w}")
    comparisons = [r for r in records if r["kind"] == "comparison"]
    if comparisons:
        out += [""] if out else []
        out += _table(
            ["Strategy", "Estimate (Wh)", "Wattmeter (Wh)", "Share (%)"],
            [[r["strategy"], _cell(r["energy_wo_pue_wh"]), _cell(r["wattmeter_wh"]),
              _cell(sig6(r["percentage"] * 100))] for r in comparisons],
        )
    for r in records:
        if r["kind"] == "idle":
            out += ["", f"idle power {_cell(r['idle_power_w'])} W; dynamic energy "
                    f"{_cell(r['dynamic_energy_wh'])} Wh; idle fraction {_cell(r['idle_fraction'])}"]
        elif r["kind"] == "overhead":
            out += ["", f"extra time {_cell(r['extra_time_s'])} s; extra energy "
                    f"{_cell(r['extra_energy_wh'])} Wh; overload {_cell(r['overload'])}"]
    for r in records:
        if r["kind"] == "error":
            out.append(f"error {r['strategy']}: {r['error']}: {r['message']}")
    return "\n".join(out).lstrip("\n") + "\n"


def render(records: Iterable[dict], fmt: str = "jsonl") -> str:
    if fmt == "jsonl":
        return to_jsonl(records)
    if fmt == "csv":
        return to_csv(records)
    if fmt == "human":
        return to_human(records)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


class ReportFormatError(EcotraceError, ValueError):
    pass


def read_records(path) -> list[dict]:
    """Load a JSON-lines report written by :func:`to_jsonl`."""
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportFormatError(f"{path}:{lineno}: {exc}") from None
            if rec.get("schema_version") != REPORT_SCHEMA_VERSION:
                raise ReportFormatError(
                    f"{path}:{lineno}: unsupported report schema_version {rec.get('schema_version')!r}"
                )
            if "kind" not in rec:
                raise ReportFormatError(f"{path}:{lineno}: record has no kind")
            records.append(rec)
    return records
