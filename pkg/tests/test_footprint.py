import datetime as dt

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecotrace.catalog import STRATEGY_DEFAULT, Strategy
from ecotrace.errors import (
    CatalogParseError,
    IntensityNotFoundError,
    IntensityRequiredError,
    InvalidFactorError,
    InvalidPueError,
)
from ecotrace.estimators import EnergyBreakdown
from ecotrace.footprint import (
    CarbonIntensityRecord,
    CarbonIntensityTable,
    FixtureProvider,
    StaticTableProvider,
    apply_pue,
    build_report,
    emissions,
    energy_from_emissions,
    intensity_provider,
    load_carbon_table,
    lookup_carbon_intensity,
    scale_runs,
    storage_footprint,
    transfer_footprint,
)


def test_apply_pue_defaults():
    assert apply_pue(3.590, "GA")[0] == pytest.approx(5.9953)
    assert apply_pue(7.0, "E2") == (7.0, 1.0)
    assert apply_pue(100.0, "CT")[0] == pytest.approx(155.0)
    assert apply_pue(100.0, "EIT")[1] == 1.58
    assert apply_pue(10.0, "CC", 1.4)[0] == pytest.approx(14.0)


def test_apply_pue_rejects_below_one():
    with pytest.raises(InvalidPueError):
        apply_pue(1.0, "GA", 0.9)


def test_lookup_intensity():
    table = load_carbon_table()
    assert lookup_carbon_intensity(table, "FR", "CC").intensity == 64
    assert lookup_carbon_intensity(table, "fr", "MLCO2").intensity == 64
    assert lookup_carbon_intensity(table, "XX", "EIT").intensity == 301
    assert lookup_carbon_intensity(table, None, "E2").intensity == 436.5
    assert lookup_carbon_intensity(table, None, "CMLTR").intensity == 447
    with pytest.raises(IntensityRequiredError):
        lookup_carbon_intensity(table, "XX", "MLCO2")
    with pytest.raises(IntensityRequiredError):
        lookup_carbon_intensity(table, None, "MLCO2")


def test_emissions_and_inverse():
    assert emissions(1000.0, 64.0) == pytest.approx(64.0)
    assert emissions(0.0, 500.0) == 0.0
    assert energy_from_emissions(0.563, 447.0) == pytest.approx(1.2595e-3, rel=1e-3)
    assert energy_from_emissions(0.0, 10.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        energy_from_emissions(1.0, 0.0)


@given(st.floats(0, 1e7), st.floats(0.01, 2000), st.floats(0.01, 2000))
def test_emissions_linear_and_ordered(e, ci_a, ci_b):
    assert emissions(2 * e, ci_a) == pytest.approx(2 * emissions(e, ci_a))
    if ci_a < ci_b:
        assert emissions(e, ci_a) <= emissions(e, ci_b)
    assert energy_from_emissions(emissions(e, ci_a), ci_a) * 1000 == pytest.approx(e, rel=1e-12, abs=1e-9)


@given(st.floats(0, 1e6), st.sampled_from(list(Strategy)))
def test_pue_never_decreases(e, strategy):
    assert apply_pue(e, strategy)[0] >= e


def test_transfer_and_storage():
    assert transfer_footprint(6) == pytest.approx(0.138)
    assert transfer_footprint(0) == 0
    kg, kwh = storage_footprint(1, 1)
    assert kg == pytest.approx(10.0)
    assert kwh == pytest.approx(53.248)
    with pytest.raises(ValueError):
        transfer_footprint(-1)


def _breakdown(total=1000.0, strategy=Strategy.CC):
    return EnergyBreakdown(strategy, "machine", 3600.0, cpu_energy=total)


def test_scale_runs():
    rep = build_report(_breakdown(), table=load_carbon_table(), region="FR")
    assert rep.emissions == pytest.approx(64.0)
    assert scale_runs(rep, 1).emissions == rep.emissions
    three = scale_runs(rep, 3)
    assert three.emissions == pytest.approx(192.0)
    assert three.scaled_energy == pytest.approx(3000.0)
    assert three.energy_with_pue == rep.energy_with_pue
    assert dict((c.name, c.value) for c in three.constants_used)["scaling_factor"] == 3
    with pytest.raises(InvalidFactorError):
        scale_runs(rep, 0.5)


def test_report_invariants_and_provenance():
    rep = build_report(_breakdown(500.0, Strategy.GA), table=load_carbon_table(), region="ZA",
                       scaling_factor=2)
    assert rep.energy_with_pue == pytest.approx(500.0 * 1.67)
    assert rep.emissions == pytest.approx(500.0 * 1.67 / 1000 * 684 * 2)
    names = {c.name: c for c in rep.constants_used}
    assert names["pue"].provenance == STRATEGY_DEFAULT
    assert names["carbon_intensity_g_per_kwh"].value == 684
    assert names["carbon_intensity_g_per_kwh"].provenance == "carbon-table"
    user = build_report(_breakdown(), ci=100.0)
    assert {c.name: c.provenance for c in user.constants_used}["carbon_intensity_g_per_kwh"] == "user"
    with pytest.raises(InvalidFactorError):
        build_report(_breakdown(), ci=1.0, scaling_factor=0.5)


def test_fixture_provider():
    prov = FixtureProvider()
    assert prov.intensity("FR", "2023-03-29").intensity == 137
    assert intensity_provider(prov, "SE-SE1", dt.date(2023, 3, 5)).intensity == 16
    with pytest.raises(IntensityNotFoundError):
        prov.intensity("FR", "2020-01-01")
    rep = build_report(_breakdown(), provider=prov, region="ZA", when="2023-03-29")
    assert rep.carbon_intensity.intensity == 702


def test_static_provider_ignores_time():
    prov = StaticTableProvider(load_carbon_table())
    assert prov.intensity("FR", "1999-01-01") == prov.intensity("FR", dt.datetime(2030, 5, 5))
    with pytest.raises(IntensityNotFoundError):
        prov.intensity("XX")


def test_table_parse_errors(tmp_path):
    p = tmp_path / "ci.csv"
    p.write_text("region_code,intensity_g_per_kwh,year,source\nFR,-3,2023,x\n")
    with pytest.raises(CatalogParseError):
        load_carbon_table(p)
    p.write_text("region,ci\nFR,3\n")
    with pytest.raises(CatalogParseError):
        load_carbon_table(p)


def test_record_invariant():
    with pytest.raises(ValueError):
        CarbonIntensityRecord("FR", 0.0, 2023, "x")
    assert len(CarbonIntensityTable([CarbonIntensityRecord("FR", 1.0, None, "x")])) == 1


def test_build_report_region_uses_bundled_table():
    b = EnergyBreakdown(Strategy.GA, "process", 60.0, cpu_energy=1000.0)
    assert build_report(b, region="FR").carbon_intensity.intensity == 64.0
    assert build_report(b).carbon_intensity.intensity == 475.0
