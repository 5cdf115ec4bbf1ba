import json
import sys
from pathlib import Path

import pytest

from ecotrace import cli
from ecotrace.catalog import CpuSpec, GpuSpec, HardwareSpec
from ecotrace.report import read_records
from ecotrace.telemetry import Segment, save_trace, synth_trace

GOLDEN = Path(__file__).parent / "golden" / "replay_synth.jsonl"

EST = ["estimate", "--runtime", "3600", "--cores", "16", "--memory", "64",
       "--gpu-model", "UnknownGPU", "--region", "FR"]

HW = HardwareSpec(
    cpu=CpuSpec("Synthetic CPU", cores_per_socket=16, logical_cores=16),
    memory_total=64.0,
    gpus=GpuSpec("NVIDIA Tesla T4"),
    region_code="FR",
)


def golden_trace():
    segs = [
        Segment(120.0, rapl_package_w=90.0, rapl_dram_w=6.0, gpu_w=60.0, gpu_util=0.8,
                process_cores=6.0, machine_cores=7.0, process_rss_gb=10.0,
                machine_memory_gb=16.0, wattmeter_w=210.0),
        Segment(60.0, rapl_package_w=40.0, rapl_dram_w=4.0, gpu_w=20.0, gpu_util=0.1,
                process_cores=1.0, machine_cores=2.0, process_rss_gb=10.0,
                machine_memory_gb=14.0, wattmeter_w=120.0),
    ]
    return synth_trace(segs, 10.0, hardware=HW)


def _run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr().out


def _jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line]


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in [k for k in list(__import__("os").environ) if k.startswith("ECOTRACE_")]:
        monkeypatch.delenv(key)


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "synth.trace.jsonl"
    save_trace(golden_trace(), path)
    return path


# -- estimate


def test_estimate_worked_example(capsys):
    code, out = _run(EST, capsys)
    assert code == 0
    (rec,) = _jsonl(out)
    assert rec["kind"] == "emission" and rec["strategy"] == "GA"
    assert rec["energy_wo_pue_wh"] == pytest.approx(415.84)
    assert rec["energy_with_pue_wh"] == pytest.approx(694.453)
    assert rec["emissions_g"] == pytest.approx(694.4528 * 64 / 1000, rel=1e-5)
    names = {c["name"]: c["provenance"] for c in rec["constants_used"]}
    assert names["pue"] == "strategy-default"


def test_estimate_scaling(capsys):
    _, one = _run(EST, capsys)
    _, five = _run(EST + ["--scaling-factor", "5"], capsys)
    assert _jsonl(five)[0]["emissions_g"] == pytest.approx(5 * _jsonl(one)[0]["emissions_g"], rel=1e-5)
    assert _run(EST + ["--scaling-factor", "0.5"], capsys)[0] == 1


def test_estimate_mlco2_needs_region(capsys):
    code, _ = _run(["estimate", "-s", "mlco2", "--runtime", "57", "--memory", "16",
                    "--gpu-model", "NVIDIA TITAN V"], capsys)
    assert code == 1
    code, out = _run(["estimate", "-s", "mlco2", "--runtime", "57", "--memory", "16",
                      "--gpu-model", "NVIDIA TITAN V", "--region", "FR"], capsys)
    assert code == 0
    assert _jsonl(out)[0]["energy_wo_pue_wh"] == pytest.approx(3.95833, rel=1e-5)


def test_estimate_mixed_strategies_keep_going(capsys):
    code, out = _run(["estimate", "-s", "ga", "-s", "mlco2", "--runtime", "60", "--memory", "8",
                      "--region", "FR"], capsys)
    assert code == 0
    kinds = [(r["strategy"], r["kind"]) for r in _jsonl(out)]
    assert kinds == [("GA", "emission"), ("MLCO2", "error")]


def test_estimate_rejects_trace_strategies(capsys):
    assert _run(EST + ["-s", "ct"], capsys)[0] == 1


def test_usage_errors_exit_1(capsys):
    assert _run(["estimate", "--memory", "1"], capsys)[0] == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["estimate", "--bogus"])
    assert exc.value.code == 1


# -- settings precedence


def test_flag_env_config_precedence(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "eco.conf"
    cfg.write_text("# defaults\npue = 3\nci = 100\n")
    _, out = _run(EST + ["--config", str(cfg)], capsys)
    rec = _jsonl(out)[0]
    assert rec["pue"] == 3 and rec["carbon_intensity_g_per_kwh"] == 100
    monkeypatch.setenv("ECOTRACE_PUE", "2")
    _, out = _run(EST + ["--config", str(cfg)], capsys)
    assert _jsonl(out)[0]["pue"] == 2
    _, out = _run(EST + ["--config", str(cfg), "--pue", "1.2"], capsys)
    assert _jsonl(out)[0]["pue"] == 1.2


def test_bad_config_line(tmp_path, capsys):
    cfg = tmp_path / "eco.conf"
    cfg.write_text("just words\n")
    assert _run(EST + ["--config", str(cfg)], capsys)[0] == 1


# -- replay


def test_replay_all_strategies(trace_file, capsys):
    code, out = _run(["replay", str(trace_file)], capsys)
    assert code == 0
    recs = _jsonl(out)
    emissions = [r["strategy"] for r in recs if r["kind"] == "emission"]
    assert emissions == ["GA", "CC(P)", "CC(M)", "E2(P)", "E2(M)", "CT", "EIT", "MLCO2", "CMLTR"]
    assert len([r for r in recs if r["kind"] == "comparison"]) == 9


def test_replay_golden(trace_file, tmp_path, capsys):
    out_a, out_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert cli.main(["replay", str(trace_file), "-o", str(out_a)]) == 0
    assert cli.main(["replay", str(trace_file), "-o", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    assert out_a.read_text() == GOLDEN.read_text()


def test_replay_without_rapl(tmp_path, capsys):
    t = synth_trace([Segment(600.0, gpu_w=50.0, process_cores=2.0, machine_cores=3.0,
                             process_rss_gb=2.0, machine_memory_gb=8.0)], 10.0, hardware=HW)
    path = tmp_path / "t.jsonl"
    save_trace(t, path)
    code, out = _run(["replay", str(path), "-s", "cc", "-s", "eit"], capsys)
    assert code == 0
    recs = {r["strategy"]: r for r in _jsonl(out)}
    assert recs["EIT"]["kind"] == "error" and recs["EIT"]["error"] == "RaplRequiredError"
    assert recs["CC(M)"]["cpu_wh"] == pytest.approx(85 * 0.5 * 600 / 3600, rel=1e-5)


def test_replay_missing_file(tmp_path, capsys):
    assert _run(["replay", str(tmp_path / "nope.jsonl")], capsys)[0] == 1


# -- compare


def test_compare_needs_wattmeter(tmp_path, capsys):
    path = tmp_path / "t.jsonl"
    save_trace(synth_trace([Segment(60.0, gpu_w=1.0)], 10.0), path)
    assert _run(["compare", str(path)], capsys)[0] != 0


def test_compare_with_idle_and_baseline(trace_file, tmp_path, capsys):
    idle = tmp_path / "idle.jsonl"
    save_trace(synth_trace([Segment(180.0, wattmeter_w=100.0)], 10.0, hardware=HW), idle)
    base = tmp_path / "base.jsonl"
    save_trace(synth_trace([Segment(150.0, wattmeter_w=200.0)], 10.0, hardware=HW), base)
    code, out = _run(["compare", str(trace_file), "--idle", str(idle), "--baseline", str(base),
                      "-s", "cc", "-s", "ct"], capsys)
    assert code == 0
    recs = _jsonl(out)
    assert [r["kind"] for r in recs] == ["comparison"] * 3 + ["idle", "overhead"]
    idle_rec = recs[3]
    assert idle_rec["idle_power_w"] == pytest.approx(100.0)
    overhead = recs[4]
    assert overhead["extra_time_s"] == pytest.approx(30.0)


# -- report


def test_report_rerender(trace_file, tmp_path, capsys):
    path = tmp_path / "r.jsonl"
    assert cli.main(["replay", str(trace_file), "-o", str(path)]) == 0
    code, csv_out = _run(["report", str(path), "--format", "csv"], capsys)
    assert code == 0
    lines = csv_out.splitlines()
    assert lines[0].startswith("schema_version,kind,strategy")
    assert len(lines) == 1 + len(read_records(path))
    code, human = _run(["report", str(path), "--format", "human"], capsys)
    assert "Energy w/o PUE (Wh)" in human and "CC(M)" in human


def test_report_rejects_foreign_file(tmp_path, capsys):
    path = tmp_path / "r.jsonl"
    path.write_text('{"kind": "emission"}\n')
    assert _run(["report", str(path)], capsys)[0] == 1


# -- track


def _hw_json(tmp_path):
    path = tmp_path / "hw.json"
    path.write_text(json.dumps(HW.to_dict()))
    return str(path)


def test_track_child_exit_code(tmp_path, capsys):
    out = tmp_path / "run.jsonl"
    code = cli.main(["track", "--interval", "0.2", "--hardware", _hw_json(tmp_path),
                     "--channels", "process,machine", "-s", "e2", "-s", "ga", "-o", str(out),
                     "--", sys.executable, "-c", "import time; time.sleep(0.6); raise SystemExit(3)"])
    assert code == 3
    recs = read_records(out)
    assert [r["strategy"] for r in recs] == ["GA", "E2(P)", "E2(M)"]
    assert (tmp_path / "run.trace.jsonl").exists()


def test_track_spawn_failure(tmp_path, capsys):
    code = cli.main(["track", "--interval", "0.2", "--hardware", _hw_json(tmp_path),
                     "--trace", str(tmp_path / "t.jsonl"), "--", "/definitely/not/here"])
    assert code == 127


def test_track_requires_command_or_duration(capsys):
    assert _run(["track"], capsys)[0] == 1
    assert _run(["track", "--duration", "1", "--", "true"], capsys)[0] == 1
    assert _run(["track", "--duration", "1", "--channels", "bogus"], capsys)[0] == 1
