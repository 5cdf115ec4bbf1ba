"""``ecotrace`` command line.

Subcommands::

    track     run a command under the sampler, then report on the trace
    replay    run estimators over a saved trace
    estimate  calculator-style estimate from a hardware description
    compare   estimators against the wattmeter, plus idle/overhead analyses
    report    re-render a JSON-lines report as CSV or a table

Settings resolve as command-line flag, then ``ECOTRACE_<NAME>`` environment
variable, then the ``--config`` file (flat ``key = value`` lines).

Exit status: 0 success, 1 usage or input error, 2 sensor or permission
error, 127 when the tracked command cannot be started; otherwise ``track``
exits with the tracked command's status.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .analysis import WATTMETER, compare_to_wattmeter, idle_baseline, overhead_report
from .catalog import CpuSpec, GpuSpec, HardwareSpec, Strategy, load_catalog, strategy_defaults
from .errors import (
    EcotraceError,
    SensorPermissionError,
    SensorUnavailableError,
    SpawnError,
)
from .estimators import (
    EstimateOptions,
    UsageFactors,
    estimate_cumulator,
    estimate_green_algorithms,
    estimate_mlco2,
    estimate_trace,
    row_order,
)
from .footprint import FixtureProvider, build_report, load_carbon_table
from .report import (
    FORMATS,
    comparison_record,
    emission_record,
    error_record,
    idle_record,
    overhead_record,
    read_records,
    render,
)
from .telemetry import Recorder, SamplerConfig, load_trace
from .telemetry.sensors import CHANNEL_GROUPS, detect_hardware
from .telemetry.trace import TelemetryTrace
from .validation import check_factor, check_positive, check_strategies

log = logging.getLogger("ecotrace")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SENSOR = 2
EXIT_SPAWN = 127

ENV_PREFIX = "ECOTRACE_"
DEFAULT_INTERVAL = 10.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# settings


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().lower().replace("-", "_")] = value.strip()
    return out


@dataclass
class Settings:
    args: argparse.Namespace
    config: dict
    env: dict

    def get(self, key: str, conv: Callable = str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        raw = self.env.get(ENV_PREFIX + key.upper())
        if raw in (None, ""):
            raw = self.config.get(key)
        if raw in (None, ""):
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError):
            raise UsageError(f"bad value for {key}: {raw!r}") from None

    def strategies(self, default=None) -> list[Strategy]:
        values = getattr(self.args, "strategy", None)
        if not values:
            raw = self.get("strategy")
            values = [v for v in raw.split(",") if v.strip()] if raw else default
        return check_strategies(values)


def _settings(args) -> Settings:
    path = args.config or os.environ.get(ENV_PREFIX + "CONFIG")
    config = read_config(path) if path else {}
    return Settings(args, config, dict(os.environ))


# --------------------------------------------------------------------------
# shared pipeline


def _catalog(s: Settings):
    return load_catalog(s.get("cpu_catalog"), s.get("gpu_catalog"))


def _footprint_kw(s: Settings, region: str) -> dict:
    pue = s.get("pue", float)
    ci = s.get("ci", float)
    scaling = check_factor(s.get("scaling_factor", float, 1.0))
    kw = dict(region=region or None, pue=pue, ci=ci, scaling_factor=scaling)
    date = s.get("date")
    if date and ci is None:
        kw["provider"] = FixtureProvider(s.get("intensity_fixture"))
        kw["when"] = date
    else:
        kw["table"] = load_carbon_table(s.get("carbon_table"))
    return kw


def _sorted(rows: list[tuple[str, dict]]) -> list[dict]:
    return [r for _, r in sorted(rows, key=lambda p: row_order(p[0]))]


def trace_records(trace: TelemetryTrace, s: Settings, strategies=None) -> tuple[list[dict], list]:
    """Emission (or error) records for every strategy, and the breakdowns
    that succeeded."""
    strategies = strategies or s.strategies()
    catalog = _catalog(s)
    options = EstimateOptions(
        cumulator_component=s.get("cumulator_component", str, "cpu"),
        bytes_communicated=s.get("bytes_communicated", float, 0.0),
        catalog=catalog,
    )
    fkw = _footprint_kw(s, s.get("region", str, trace.hardware.region_code))
    rows, breakdowns = [], []
    for strategy in strategies:
        try:
            results = estimate_trace(strategy, trace, options)
        except EcotraceError as exc:
            rows.append((strategy.value, error_record(strategy.value, exc)))
            continue
        for b in results:
            breakdowns.append(b)
            try:
                rows.append((b.label, emission_record(build_report(b, **fkw))))
            except EcotraceError as exc:
                rows.append((b.label, error_record(b.label, exc)))
    return _sorted(rows), breakdowns


def _emit(s: Settings, records: list[dict]) -> None:
    fmt = s.get("format", str, "jsonl")
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    text = render(records, fmt)
    out = s.get("output")
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _hardware_file(path) -> HardwareSpec:
    with Path(path).open(encoding="utf-8") as fh:
        return HardwareSpec.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# subcommands


def cmd_track(args) -> int:
    s = _settings(args)
    command = list(args.command or [])
    if command and command[0] == "--":
        command = command[1:]
    duration = s.get("duration", float)
    if bool(command) == (duration is not None):
        raise UsageError("give a command after '--' or --duration, not both")
    strategies = s.strategies()
    intervals = [strategy_defaults(x).sampling_interval for x in strategies]
    intervals = [i for i in intervals if i is not None]
    interval = check_positive(s.get("interval", float, min(intervals, default=DEFAULT_INTERVAL)),
                              "interval")
    channels = s.get("channels")
    if channels is not None:
        channels = frozenset(c.strip() for c in channels.split(",") if c.strip())
        bad = channels - set(CHANNEL_GROUPS)
        if bad:
            raise UsageError(f"unknown channel groups {sorted(bad)}; choose from {CHANNEL_GROUPS}")
    region = s.get("region", str, "")
    hw_path = s.get("hardware")
    spec = _hardware_file(hw_path) if hw_path else detect_hardware(region)
    out = s.get("output")
    trace_path = s.get("trace") or (
        str(Path(out).with_suffix("")) + ".trace.jsonl" if out and out != "-" else "ecotrace-trace.jsonl"
    )
    config = SamplerConfig(
        interval=interval, channels=channels, duration=duration,
        command=command or None, marker_file=s.get("marker_file"),
    )
    rec = Recorder(config, spec)
    trace = rec.run(trace_path)
    log.info("trace written to %s (%d samples)", trace_path, len(trace.samples))
    records, _ = trace_records(trace, s, strategies)
    _emit(s, records)
    return rec.returncode if rec.returncode is not None else EXIT_OK


def cmd_replay(args) -> int:
    s = _settings(args)
    trace = load_trace(args.trace)
    records, breakdowns = trace_records(trace, s)
    if trace.has_channel(WATTMETER) and breakdowns:
        records += [comparison_record(r) for r in compare_to_wattmeter(breakdowns, trace)]
    _emit(s, records)
    return EXIT_OK


def _estimate_spec(s: Settings) -> HardwareSpec:
    hw_path = s.get("hardware")
    if hw_path:
        return _hardware_file(hw_path)
    cores = s.get("cores", int, 1)
    sockets = s.get("sockets", int, 1)
    gpu_model = s.get("gpu_model")
    gpus = None
    if gpu_model:
        gpus = GpuSpec(gpu_model, count=s.get("gpu_count", int, 1), tdp_watts=s.get("gpu_tdp", float))
    memory = s.get("memory", float)
    if memory is None:
        raise UsageError("--memory (GB) is required without --hardware")
    return HardwareSpec(
        cpu=CpuSpec(s.get("cpu_model", str, ""), sockets=sockets, cores_per_socket=cores,
                    logical_cores=s.get("logical_cores", int), tdp_watts=s.get("cpu_tdp", float)),
        memory_total=memory,
        gpus=gpus,
        region_code=s.get("region", str, ""),
    )


def cmd_estimate(args) -> int:
    s = _settings(args)
    runtime = s.get("runtime", float)
    if runtime is None:
        raise UsageError("--runtime (seconds) is required")
    runtime = check_positive(runtime, "runtime")
    spec = _estimate_spec(s)
    strategies = s.strategies(default=["GA"])
    scalar = {Strategy.GA, Strategy.MLCO2, Strategy.CMLTR}
    if not set(strategies) <= scalar:
        raise UsageError("estimate supports GA, MLCO2 and CMLTR; use replay for trace-driven strategies")
    catalog = _catalog(s)
    usage = UsageFactors(
        cpu_usage=s.get("cpu_usage", float, 1.0),
        gpu_usage=s.get("gpu_usage", float, 1.0),
        memory_requested=s.get("memory_requested", float),
    )
    fkw = _footprint_kw(s, spec.region_code)
    rows = []
    for strategy in strategies:
        try:
            if strategy is Strategy.GA:
                b = estimate_green_algorithms(spec, runtime, usage, catalog)
            elif strategy is Strategy.MLCO2:
                b = estimate_mlco2(spec, runtime, catalog)
            else:
                b = estimate_cumulator(spec, runtime, s.get("cumulator_component", str, "cpu"),
                                       s.get("bytes_communicated", float, 0.0), catalog)
            rows.append((b.label, emission_record(build_report(b, **fkw))))
        except EcotraceError as exc:
            if len(strategies) == 1:
                raise
            rows.append((strategy.value, error_record(strategy.value, exc)))
    _emit(s, _sorted(rows))
    return EXIT_OK


def cmd_compare(args) -> int:
    s = _settings(args)
    active = load_trace(args.trace)
    active.require(WATTMETER, "compare needs a wattmeter channel")
    records, breakdowns = trace_records(active, s)
    records = [r for r in records if r["kind"] == "error"]
    records += [comparison_record(r) for r in compare_to_wattmeter(breakdowns, active)]
    if args.idle:
        records.append(idle_record(idle_baseline(active, load_trace(args.idle))))
    if args.baseline:
        idle_power = s.get("idle_power", float, 0.0)
        records.append(overhead_record(overhead_report(active, load_trace(args.baseline), idle_power)))
    _emit(s, records)
    return EXIT_OK


def cmd_report(args) -> int:
    s = _settings(args)
    _emit(s, read_records(args.report))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, *, footprint: bool = True) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--format", choices=FORMATS, help="output format (default jsonl)")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    if footprint:
        p.add_argument("--strategy", "-s", action="append",
                       help="strategy id (GA, CC, E2, CT, EIT, MLCO2, CMLTR); repeatable")
        p.add_argument("--region", help="region code for the carbon intensity lookup")
        p.add_argument("--date", help="day (YYYY-MM-DD) for the intensity fixture provider")
        p.add_argument("--pue", type=float, help="override the strategy PUE")
        p.add_argument("--ci", type=float, help="carbon intensity in gCO2eq/kWh")
        p.add_argument("--scaling-factor", type=float, help="number of runs (>= 1)")
        p.add_argument("--cpu-catalog", help="CPU TDP CSV")
        p.add_argument("--gpu-catalog", help="GPU TDP CSV")
        p.add_argument("--carbon-table", help="carbon intensity CSV")
        p.add_argument("--intensity-fixture", help="daily intensity CSV")
        p.add_argument("--bytes-communicated", type=float, help="bytes sent, for CMLTR")
        p.add_argument("--cumulator-component", choices=("cpu", "gpu"),
                       help="device CMLTR charges for")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecotrace", description="Energy and carbon accounting for compute jobs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("track", help="sample while a command runs")
    _common(p)
    p.add_argument("--interval", type=float, help="seconds between samples")
    p.add_argument("--duration", type=float, help="sample for this many seconds instead of a command")
    p.add_argument("--channels", help=f"comma list of {', '.join(CHANNEL_GROUPS)} (default: all found)")
    p.add_argument("--hardware", help="hardware description JSON (default: detect)")
    p.add_argument("--trace", help="trace file to write")
    p.add_argument("--marker-file", help="file the command appends epoch marks to")
    p.add_argument("command", nargs=argparse.REMAINDER, help="-- command [args...]")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("replay", help="estimate from a saved trace")
    _common(p)
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("estimate", help="calculator estimate without a trace")
    _common(p)
    p.add_argument("--hardware", help="hardware description JSON")
    p.add_argument("--runtime", type=float, help="seconds")
    p.add_argument("--cpu-model")
    p.add_argument("--sockets", type=int)
    p.add_argument("--cores", type=int, help="physical cores per socket")
    p.add_argument("--logical-cores", type=int)
    p.add_argument("--cpu-tdp", type=float, help="W per chip")
    p.add_argument("--memory", type=float, help="GB")
    p.add_argument("--gpu-model")
    p.add_argument("--gpu-count", type=int)
    p.add_argument("--gpu-tdp", type=float, help="W per device")
    p.add_argument("--cpu-usage", type=float)
    p.add_argument("--gpu-usage", type=float)
    p.add_argument("--memory-requested", type=float, help="GB")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="estimators against the wattmeter")
    _common(p)
    p.add_argument("trace", help="active trace with a wattmeter channel")
    p.add_argument("--idle", help="idle trace of the same node")
    p.add_argument("--baseline", help="trace of the same job without a tracker")
    p.add_argument("--idle-power", type=float, help="W removed from the overhead window")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="re-render a JSON-lines report")
    _common(p, footprint=False)
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpawnError as exc:
        log.error("%s", exc)
        return EXIT_SPAWN
    except (SensorUnavailableError, SensorPermissionError) as exc:
        log.error("%s", exc)
        return EXIT_SENSOR
    except (UsageError, EcotraceError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
