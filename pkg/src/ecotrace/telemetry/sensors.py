"""Live platform sensors.

* RAPL package/DRAM energy counters from the Linux powercap tree
  (``/sys/class/powercap/intel-rapl:N/energy_uj``).
* NVIDIA GPU power draw and utilization through pynvml when importable,
  otherwise ``nvidia-smi --query-gpu``.
* Process and machine CPU time / memory through psutil.

Unavailable channels are left out of the sample, never filled with zeros.
"""

from __future__ import annotations

import logging
import os
import re
import shutil
import subprocess
import time
from pathlib import Path
from typing import Iterable, Optional

import psutil

from ..errors import SensorPermissionError, SensorUnavailableError
from .trace import PowerSample

log = logging.getLogger(__name__)

POWERCAP_ROOT = Path("/sys/class/powercap")
CHANNEL_GROUPS = ("rapl", "gpu", "process", "machine")

_PKG_DIR = re.compile(r"^intel-rapl:(\d+)$")
_SUB_DIR = re.compile(r"^intel-rapl:(\d+):(\d+)$")


class RaplDomain:
    def __init__(self, path: Path):
        self.path = path
        self.energy_file = path / "energy_uj"
        self.range_file = path / "max_energy_range_uj"

    def _read(self, file: Path) -> float:
        try:
            return float(file.read_text().strip())
        except PermissionError:
            raise SensorPermissionError(file) from None

    def energy_uj(self) -> float:
        return self._read(self.energy_file)

    def max_range_uj(self) -> float:
        return self._read(self.range_file)


class RaplReader:
    """Package and DRAM energy counters of every socket."""

    def __init__(self, root=POWERCAP_ROOT):
        self.root = Path(root)
        self.packages: list[RaplDomain] = []
        self.dram: list[RaplDomain] = []
        self.probed: list[str] = [str(self.root / "intel-rapl:*")]
        if not self.root.is_dir():
            return
        pkgs = {}
        for entry in self.root.iterdir():
            m = _PKG_DIR.match(entry.name)
            if m and (entry / "energy_uj").exists():
                pkgs[int(m.group(1))] = entry
        drams = {}
        for entry in self.root.rglob("intel-rapl:*:*"):
            m = _SUB_DIR.match(entry.name)
            if not m:
                continue
            name_file = entry / "name"
            if name_file.exists() and name_file.read_text().strip() == "dram":
                drams[int(m.group(1))] = entry
        for idx in sorted(pkgs):
            self.packages.append(RaplDomain(pkgs[idx]))
        # DRAM only when every package exposes one, so the vector lines up
        if drams and set(drams) == set(pkgs):
            self.dram = [RaplDomain(drams[i]) for i in sorted(drams)]

    @property
    def available(self) -> bool:
        return bool(self.packages)

    def read_packages(self) -> tuple[float, ...]:
        return tuple(d.energy_uj() for d in self.packages)

    def read_dram(self) -> Optional[tuple[float, ...]]:
        if not self.dram:
            return None
        return tuple(d.energy_uj() for d in self.dram)

    def ranges(self) -> dict:
        out = {"rapl_package": [d.max_range_uj() for d in self.packages]}
        if self.dram:
            out["rapl_dram"] = [d.max_range_uj() for d in self.dram]
        return out


class GpuQuery:
    """Power draw (mW) and utilization (fraction) for each NVIDIA device."""

    def __init__(self, nvidia_smi: Optional[str] = None, use_nvml: bool = True):
        self._nvml = None
        self._handles = []
        self.probed: list[str] = []
        if use_nvml and nvidia_smi is None:
            try:
                import pynvml

                pynvml.nvmlInit()
                count = pynvml.nvmlDeviceGetCount()
                self._handles = [pynvml.nvmlDeviceGetHandleByIndex(i) for i in range(count)]
                self._nvml = pynvml
            except Exception:  # library missing or no driver
                self.probed.append("pynvml")
        self.smi = nvidia_smi or shutil.which("nvidia-smi")
        if self._nvml is None:
            self.probed.append(self.smi or "nvidia-smi (not on PATH)")

    @property
    def available(self) -> bool:
        if self._nvml is not None:
            return bool(self._handles)
        if not self.smi:
            return False
        try:
            return self.query() is not None
        except (OSError, subprocess.SubprocessError, ValueError):
            return False

    def query(self) -> Optional[tuple[tuple[float, ...], tuple[float, ...]]]:
        if self._nvml is not None:
            nv = self._nvml
            power = tuple(float(nv.nvmlDeviceGetPowerUsage(h)) for h in self._handles)
            util = tuple(nv.nvmlDeviceGetUtilizationRates(h).gpu / 100.0 for h in self._handles)
            return power, util
        out = subprocess.run(
            [self.smi, "--query-gpu=power.draw,utilization.gpu", "--format=csv,noheader,nounits"],
            capture_output=True, text=True, timeout=10, check=True,
        ).stdout
        power, util = [], []
        for line in out.splitlines():
            if not line.strip():
                continue
            p, u = (x.strip() for x in line.split(","))
            if "N/A" in p or "N/A" in u:
                return None
            power.append(float(p) * 1000.0)
            util.append(min(max(float(u) / 100.0, 0.0), 1.0))
        if not power:
            return None
        return tuple(power), tuple(util)


class ProcessAccounting:
    """CPU time and RSS of a process tree (the process and its descendants)."""

    def __init__(self, pid: Optional[int] = None):
        self.pid = os.getpid() if pid is None else pid
        self.root = psutil.Process(self.pid)
        self._last_cpu = 0.0
        self._last_rss = 0.0

    def _tree(self):
        procs = [self.root]
        try:
            procs += self.root.children(recursive=True)
        except psutil.Error:
            pass
        return procs

    def read(self) -> tuple[float, float]:
        cpu = 0.0
        rss = 0.0
        alive = False
        for p in self._tree():
            try:
                with p.oneshot():
                    t = p.cpu_times()
                    cpu += t.user + t.system + t.children_user + t.children_system
                    rss += p.memory_info().rss
                alive = True
            except psutil.Error:
                continue
        if not alive:
            return self._last_cpu, self._last_rss
        # reparented orphans can make the sum dip; counters stay monotone
        self._last_cpu = max(self._last_cpu, cpu)
        self._last_rss = rss
        return self._last_cpu, rss

    def add_reaped(self, cpu_seconds: float) -> None:
        self._last_cpu = max(self._last_cpu, cpu_seconds)


def machine_cpu_time() -> float:
    t = psutil.cpu_times()
    # guest time is already inside user/nice on Linux
    skip = ("idle", "iowait", "guest", "guest_nice")
    return sum(v for k, v in t._asdict().items() if k not in skip)


def machine_memory_used() -> float:
    return float(psutil.virtual_memory().used)


class LiveSampler:
    """Probe sensors once, then read them on demand.

    ``channels`` is a subset of ``{"rapl", "gpu", "process", "machine"}``;
    ``None`` means "whatever this machine offers". A group requested
    explicitly whose energy counters are unreadable raises
    :class:`SensorPermissionError`; in auto mode it is dropped with a warning.
    """

    def __init__(
        self,
        channels: Optional[Iterable[str]] = None,
        *,
        pid: Optional[int] = None,
        powercap_root=POWERCAP_ROOT,
        gpu: Optional[GpuQuery] = None,
    ):
        explicit = channels is not None
        wanted = set(CHANNEL_GROUPS if channels is None else channels)
        unknown = wanted - set(CHANNEL_GROUPS)
        if unknown:
            raise ValueError(f"unknown channel groups {sorted(unknown)}")
        self.probed: list[str] = []
        self.active: set[str] = set()
        self.rapl: Optional[RaplReader] = None
        self.gpu: Optional[GpuQuery] = None
        self.proc: Optional[ProcessAccounting] = None
        self.counter_ranges: dict = {}
        self._last_machine = 0.0

        if "rapl" in wanted:
            reader = RaplReader(powercap_root)
            self.probed += reader.probed
            if reader.available:
                try:
                    reader.read_packages()
                    reader.read_dram()
                    self.counter_ranges = reader.ranges()
                    self.rapl = reader
                    self.active.add("rapl")
                except SensorPermissionError as exc:
                    if explicit:
                        raise
                    log.warning("%s; continuing without RAPL", exc)
            else:
                log.warning("no RAPL energy counters under %s; CPU energy falls back to TDP models",
                            powercap_root)
        if "gpu" in wanted:
            query = gpu or GpuQuery()
            self.probed += query.probed
            if query.available:
                self.gpu = query
                self.active.add("gpu")
            else:
                log.warning("no NVIDIA GPU power query available; GPU channels left out")
        if "process" in wanted:
            try:
                self.proc = ProcessAccounting(pid)
                self.active.add("process")
            except psutil.Error as exc:
                log.warning("process accounting unavailable: %s", exc)
            self.probed.append(f"psutil process {pid if pid is not None else os.getpid()}")
        if "machine" in wanted:
            self.active.add("machine")
            self.probed.append("psutil machine counters")
        if not self.active:
            raise SensorUnavailableError(self.probed)

    def sample(self, timestamp: Optional[float] = None) -> PowerSample:
        kw = {}
        if self.rapl is not None:
            kw["rapl_package_energy"] = self.rapl.read_packages()
            kw["rapl_dram_energy"] = self.rapl.read_dram()
        if self.gpu is not None:
            try:
                res = self.gpu.query()
            except (OSError, subprocess.SubprocessError, ValueError) as exc:
                log.warning("GPU query failed: %s", exc)
                res = None
            if res is not None:
                kw["gpu_power"], kw["gpu_utilization"] = res
        if self.proc is not None:
            kw["process_cpu_time"], kw["process_rss"] = self.proc.read()
        if "machine" in self.active:
            # idle/iowait bookkeeping can move busy time backwards slightly;
            # process time counts from process start, machine time from boot
            busy = max(machine_cpu_time(), self._last_machine, kw.get("process_cpu_time", 0.0))
            self._last_machine = busy
            kw["machine_cpu_time"] = busy
            kw["machine_memory_used"] = machine_memory_used()
        ts = time.monotonic() if timestamp is None else timestamp
        return PowerSample(timestamp=ts, **kw)


def sample_live(channels: Optional[Iterable[str]] = None, **kw) -> PowerSample:
    """One-shot read of every available (or requested) channel."""
    return LiveSampler(channels, **kw).sample()


def _cpuinfo() -> tuple[str, int, int]:
    """(model name, sockets, physical cores per socket) from /proc/cpuinfo."""
    model, sockets, cores = "", set(), {}
    try:
        text = Path("/proc/cpuinfo").read_text()
    except OSError:
        return model, 1, 0
    phys = "0"
    for line in text.splitlines():
        key, _, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if key == "model name" and not model:
            model = value
        elif key == "physical id":
            phys = value
            sockets.add(value)
        elif key == "cpu cores":
            cores[phys] = int(value)
    return model, max(len(sockets), 1), max(cores.values(), default=0)


def detect_hardware(region_code: str = "") -> "HardwareSpec":
    """Best-effort description of the local machine."""
    from ..catalog import CpuSpec, GpuSpec, HardwareSpec

    model, sockets, per_socket = _cpuinfo()
    logical = psutil.cpu_count(logical=True) or 1
    physical = psutil.cpu_count(logical=False) or logical
    if per_socket < 1:
        per_socket = max(physical // sockets, 1)
    logical = max(logical, sockets * per_socket)
    gpus = None
    smi = shutil.which("nvidia-smi")
    if smi:
        try:
            out = subprocess.run(
                [smi, "--query-gpu=name", "--format=csv,noheader"],
                capture_output=True, text=True, timeout=10, check=True,
            ).stdout
            names = [n.strip() for n in out.splitlines() if n.strip()]
            if names:
                gpus = GpuSpec(names[0], count=len(names))
        except (OSError, subprocess.SubprocessError):
            pass
    return HardwareSpec(
        cpu=CpuSpec(model or "unknown", sockets=sockets, cores_per_socket=per_socket,
                    logical_cores=logical, hyperthreading=logical > sockets * per_socket),
        memory_total=psutil.virtual_memory().total / 2**30,
        gpus=gpus,
        region_code=region_code,
    )
