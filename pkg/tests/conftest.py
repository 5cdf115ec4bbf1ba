import pytest

from ecotrace.catalog import CpuSpec, GpuSpec, HardwareSpec
from ecotrace.telemetry import Segment, synth_trace


@pytest.fixture
def full_segment():
    return Segment(60.0, rapl_package_w=100.0, rapl_dram_w=10.0, gpu_w=200.0, gpu_util=0.5,
                   process_cores=4.0, machine_cores=8.0, process_rss_gb=4.0,
                   machine_memory_gb=16.0, wattmeter_w=330.0)


@pytest.fixture
def gpu_hardware():
    return HardwareSpec(
        cpu=CpuSpec("Synthetic CPU", sockets=1, cores_per_socket=16, logical_cores=16),
        memory_total=64.0,
        gpus=GpuSpec("NVIDIA Tesla T4", count=1),
    )


@pytest.fixture
def full_trace(full_segment, gpu_hardware):
    return synth_trace([full_segment], 10.0, hardware=gpu_hardware)
