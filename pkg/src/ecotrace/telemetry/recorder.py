"""Periodic sampling into a :class:`TelemetryTrace`, for a fixed duration or
for as long as a child command runs."""

from __future__ import annotations

import logging
import os
import resource
import subprocess
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..catalog import HardwareSpec
from ..errors import EmptyTraceError, SpawnError
from .sensors import LiveSampler
from .trace import CHANNELS, PowerSample, TelemetryTrace, save_trace

log = logging.getLogger(__name__)

EPOCH_FILE_ENV = "ECOTRACE_EPOCH_FILE"


@dataclass(frozen=True)
class SamplerConfig:
    interval: float
    channels: Optional[frozenset] = None  # None: auto-detect
    duration: Optional[float] = None
    command: Optional[Sequence[str]] = None
    marker_file: Optional[str] = None

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        if (self.duration is None) == (self.command is None):
            raise ValueError("give exactly one of duration or command")


class _MarkerWatch:
    """Epoch marks appended by the tracked program, one line per epoch.

    A line holding a number is read as a wall-clock (``time.time()``)
    timestamp; any other line marks the moment it was noticed.
    """

    def __init__(self, path: Optional[str], wall0: float):
        self.path = Path(path) if path else None
        self.wall0 = wall0
        self.pos = 0
        self.marks: list[float] = []
        if self.path is not None:
            self.path.write_text("")

    def poll(self, now: float) -> None:
        if self.path is None or not self.path.exists():
            return
        with self.path.open("rb") as fh:
            fh.seek(self.pos)
            chunk = fh.read()
        if b"\n" not in chunk:
            return
        complete = chunk[: chunk.rindex(b"\n") + 1]
        self.pos += len(complete)
        for line in complete.decode("utf-8", "replace").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                self.marks.append(float(line) - self.wall0)
            except ValueError:
                self.marks.append(now)


class Recorder:
    def __init__(
        self,
        config: SamplerConfig,
        hardware: HardwareSpec,
        *,
        sampler_factory: Callable[..., LiveSampler] = LiveSampler,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.hardware = hardware
        self.sampler_factory = sampler_factory
        self.clock = clock
        self.sleep = sleep
        self.returncode: Optional[int] = None
        self.samples: list[PowerSample] = []

    def _take(self, sampler, t0: float) -> None:
        t = self.clock() - t0
        if self.samples and t <= self.samples[-1].timestamp:
            return
        self.samples.append(replace(sampler.sample(timestamp=t), timestamp=t))

    def run(self, path=None) -> TelemetryTrace:
        cfg = self.config
        proc = None
        if cfg.command is not None:
            env = dict(os.environ)
            if cfg.marker_file:
                env[EPOCH_FILE_ENV] = str(cfg.marker_file)
            try:
                proc = subprocess.Popen(list(cfg.command), env=env)
            except OSError as exc:
                raise SpawnError(f"cannot start {cfg.command[0]!r}: {exc}") from exc
            try:
                sampler = self.sampler_factory(cfg.channels, pid=proc.pid)
            except BaseException:
                proc.terminate()
                proc.wait()
                raise
        else:
            sampler = self.sampler_factory(cfg.channels)
        usage0 = resource.getrusage(resource.RUSAGE_CHILDREN)
        t0 = self.clock()
        markers = _MarkerWatch(cfg.marker_file, time.time())
        k = 0
        try:
            while True:
                self._take(sampler, t0)
                markers.poll(self.clock() - t0)
                k += 1
                target = k * cfg.interval
                if cfg.duration is not None:
                    if target > cfg.duration + 1e-9:
                        break
                    self._wait(t0 + target)
                else:
                    if self._wait_child(proc, t0 + target):
                        break
        except KeyboardInterrupt:
            if proc is not None:
                proc.terminate()
                proc.wait()
            raise
        if proc is not None:
            self.returncode = proc.wait()
            usage = resource.getrusage(resource.RUSAGE_CHILDREN)
            reaped = (usage.ru_utime - usage0.ru_utime) + (usage.ru_stime - usage0.ru_stime)
            if getattr(sampler, "proc", None) is not None:
                sampler.proc.add_reaped(reaped)
            self._take(sampler, t0)
        elif cfg.duration is not None and self.samples and self.samples[-1].timestamp < cfg.duration:
            self._wait(t0 + cfg.duration)
            self._take(sampler, t0)
        markers.poll(self.samples[-1].timestamp if self.samples else 0.0)
        return self._finish(markers.marks, getattr(sampler, "counter_ranges", None), path)

    def _wait(self, deadline: float) -> None:
        remaining = deadline - self.clock()
        if remaining > 0:
            self.sleep(remaining)

    def _wait_child(self, proc, deadline: float) -> bool:
        remaining = deadline - self.clock()
        try:
            proc.wait(timeout=max(remaining, 0.0))
            return True
        except subprocess.TimeoutExpired:
            return False

    def _finish(self, marks, ranges, path) -> TelemetryTrace:
        samples = self.samples
        if len(samples) < 2:
            raise EmptyTraceError(f"captured {len(samples)} samples; need at least 2")
        common = set(CHANNELS)
        for s in samples:
            common &= s.channels()
        dropped = set().union(*(s.channels() for s in samples)) - common
        if dropped:
            log.warning("dropping channels that were not read on every tick: %s", sorted(dropped))
            samples = [replace(s, **{c: None for c in dropped}) for s in samples]
        end = samples[-1].timestamp
        marks = sorted(min(max(m, 0.0), end) for m in marks)
        if ranges and "rapl_package_energy" not in common:
            ranges = None
        trace = TelemetryTrace(
            hardware=self.hardware,
            nominal_interval=self.config.interval,
            samples=tuple(samples),
            epoch_marks=tuple(marks) if self.config.marker_file else None,
            counter_ranges=ranges,
        ).validate()
        if path is not None:
            save_trace(trace, path)
        return trace


def record(config: SamplerConfig, spec: HardwareSpec, path=None, **kw) -> TelemetryTrace:
    """Sample at ``config.interval`` and return the closed trace."""
    if config.duration is not None and not config.duration > 0:
        raise EmptyTraceError("duration must be positive")
    return Recorder(config, spec, **kw).run(path)
