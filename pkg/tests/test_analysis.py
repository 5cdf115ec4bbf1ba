import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecotrace.analysis import (
    EpochProfile,
    compare_to_wattmeter,
    extrapolate,
    idle_baseline,
    idle_baseline_from_totals,
    overhead_from_totals,
    overhead_report,
    split_by_epochs,
)
from ecotrace.catalog import Strategy
from ecotrace.errors import (
    ChannelMissingError,
    DegenerateGroundTruthError,
    InsufficientDataError,
    MarksRequiredError,
)
from ecotrace.estimators import EnergyBreakdown, estimate_trace
from ecotrace.telemetry import Segment, TelemetryTrace, synth_trace


def _meter(duration, watts, interval=1.0):
    return synth_trace([Segment(duration, wattmeter_w=watts)], interval)


def _with_marks(trace, marks):
    return TelemetryTrace(trace.hardware, trace.nominal_interval, trace.samples, tuple(marks))


# -- epochs


def test_extrapolate_mean_times_n():
    profiles = [EpochProfile(0, 60.0, {"wattmeter_power": 10.0}),
                EpochProfile(1, 80.0, {"wattmeter_power": 12.0})]
    energy, duration = extrapolate(profiles, 10)
    assert energy == pytest.approx(110.0)
    assert duration == pytest.approx(700.0)


def test_extrapolate_preconditions():
    p = [EpochProfile(0, 1.0, {"gpu_power": 1.0})] * 3
    with pytest.raises(ValueError):
        extrapolate(p, 2)
    with pytest.raises(InsufficientDataError):
        extrapolate([], 5)


def test_epoch_profile_total_prefers_wattmeter():
    p = EpochProfile(0, 1.0, {"gpu_power": 1.0, "rapl_package_energy": 2.0})
    assert p.total() == 3.0
    assert p.total("gpu") == 1.0
    assert EpochProfile(0, 1.0, {"gpu_power": 1.0, "wattmeter_power": 5.0}).total() == 5.0
    with pytest.raises(ValueError):
        EpochProfile(0, 0.0)


def test_constant_trace_extrapolates_exactly():
    t = _with_marks(_meter(800.0, 250.0, 10.0), [i * 10.0 for i in range(81)])
    profiles = split_by_epochs(t)
    energy, _ = extrapolate(profiles[:2], 80)
    assert energy == pytest.approx(t.power_energy_wh("wattmeter"))
    assert len({round(p.total(), 12) for p in profiles}) == 1


def test_split_partitions_energy():
    t = synth_trace([Segment(30.0, wattmeter_w=100.0, gpu_w=20.0),
                     Segment(50.0, wattmeter_w=300.0, gpu_w=70.0)], 7.0)
    marks = [3.0, 20.0, 41.5, 77.0]
    profiles = split_by_epochs(_with_marks(t, marks))
    series = t.step_series("wattmeter")
    assert math.fsum(p.total() for p in profiles) == pytest.approx(series.energy(3.0, 77.0))
    assert [p.duration for p in profiles] == pytest.approx([17.0, 21.5, 35.5])


def test_split_needs_two_marks():
    with pytest.raises(MarksRequiredError):
        split_by_epochs(_with_marks(_meter(10.0, 1.0), [5.0]))
    with pytest.raises(MarksRequiredError):
        split_by_epochs(_meter(10.0, 1.0))


# -- idle


def test_idle_from_totals():
    r = idle_baseline_from_totals(12.96, 53.0, 10.95, 53.0)
    assert r.idle_fraction == pytest.approx(0.845, abs=5e-4)
    assert r.dynamic_energy == pytest.approx(2.01)
    assert idle_baseline_from_totals(280.3, 989.0, 204.4, 989.0).idle_fraction == pytest.approx(0.729, abs=5e-4)


def test_idle_identical_traces():
    t = _meter(100.0, 745.0)
    r = idle_baseline(t, t)
    assert r.dynamic_energy == pytest.approx(0.0, abs=1e-12)
    assert r.idle_fraction == pytest.approx(1.0)
    assert r.idle_power == pytest.approx(745.0)


def test_idle_missing_channel():
    t = synth_trace([Segment(10.0, gpu_w=1.0)], 1.0)
    with pytest.raises(ChannelMissingError):
        idle_baseline(t, _meter(10.0, 1.0))


def test_idle_rejects_bad_durations():
    with pytest.raises(ValueError):
        idle_baseline_from_totals(1.0, 1.0, 1.0, 0.0)


# -- wattmeter comparison


def _b(label_strategy, mode, total):
    return EnergyBreakdown(label_strategy, mode, 1.0, cpu_energy=total)


def test_compare_reporting():
    t = _meter(3600.0, 830.0, 60.0)
    rows = compare_to_wattmeter([_b(Strategy.CT, "machine", 760.0), _b(Strategy.GA, "process", 100.0)], t)
    assert [r.strategy_id for r in rows] == ["GA", "CT"]
    assert rows[1].percentage == pytest.approx(0.9157, abs=1e-4)
    assert rows[1].wattmeter_energy == pytest.approx(830.0)


def test_compare_zero_wattmeter():
    with pytest.raises(DegenerateGroundTruthError):
        compare_to_wattmeter([], _meter(10.0, 0.0))


def test_compare_needs_wattmeter():
    with pytest.raises(ChannelMissingError):
        compare_to_wattmeter([], synth_trace([Segment(10.0, gpu_w=1.0)], 1.0))


def test_compare_component_sum_is_full():
    t = synth_trace([Segment(600.0, rapl_package_w=90.0, rapl_dram_w=6.0, gpu_w=150.0,
                             machine_memory_gb=16.0, wattmeter_w=246.0)], 10.0)
    rows = compare_to_wattmeter(estimate_trace("CC", t) + estimate_trace("CT", t), t)
    by = {r.strategy_id: r.percentage for r in rows}
    assert by["CC(M)"] == pytest.approx(1.0)
    assert by["CT"] == pytest.approx(1.0)


@given(st.floats(0.1, 50.0))
def test_compare_time_rescale_invariant(scale):
    def trace(k):
        return synth_trace([Segment(100.0 * k, rapl_package_w=50.0, wattmeter_w=80.0),
                            Segment(40.0 * k, rapl_package_w=70.0, wattmeter_w=95.0)], 10.0 * k)
    a = compare_to_wattmeter(estimate_trace("CT", trace(1.0)), trace(1.0))[0]
    b = compare_to_wattmeter(estimate_trace("CT", trace(scale)), trace(scale))[0]
    assert b.percentage == pytest.approx(a.percentage, rel=1e-9)


# -- overhead


@pytest.mark.parametrize("w,wo,parallel,extra,expected", [
    (909, 905, 335.5, 3.1, 0.0092),
    (933, 897, 334.0, 12.2, 0.0352),
    (995, 984, 358.0, 4.29, 0.0118),
    (962, 995, 358.5, 0.0, 0.0),
    (902, 889, 331.6, 5.4, 0.0160),
])
def test_overhead_from_totals(w, wo, parallel, extra, expected):
    r = overhead_from_totals(w, wo, parallel, extra)
    assert r.overload == pytest.approx(expected, abs=5e-5)
    assert r.extra_time == max(w - wo, 0)


def test_overhead_identical_traces():
    t = _meter(100.0, 300.0)
    r = overhead_report(t, t)
    assert (r.extra_time, r.extra_energy, r.overload) == (0.0, 0.0, 0.0)


def test_overhead_36_seconds():
    with_t = _meter(933.0, 400.0)
    without = _meter(897.0, 400.0)
    r = overhead_report(with_t, without, idle_power=100.0)
    assert r.extra_time == pytest.approx(36.0)
    assert r.extra_energy == pytest.approx(300.0 * 36 / 3600)
    assert r.overload == pytest.approx(3.0 / (400.0 * 897 / 3600 + 3.0))


def test_overhead_negative_is_clamped():
    r = overhead_report(_meter(962.0, 1.0), _meter(995.0, 1.0))
    assert r.extra_time == 0 and r.overload == 0
    assert r.raw_extra_time == pytest.approx(-33.0)
