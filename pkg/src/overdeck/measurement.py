"""Per-step load samples and the reliable-only epoch aggregation.

Asynchronous launches return to the host immediately, so their samples only
carry launch time.  They are kept for the record but never reach the balancer.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .gpucost import GpuModel


class MeasurementError(ValueError):
    pass


class IncompleteMeasurementError(MeasurementError):
    """Some VP has no synchronous sample in the epoch."""


@dataclass(frozen=True)
class StepSample:
    vp: int
    step: int
    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise MeasurementError(f"unknown mode {self.mode!r}")
        if not self.value >= 0:
            raise MeasurementError("sample value must be non-negative")

    @property
    def reliable(self) -> bool:
        return self.mode == "sync"


@dataclass(frozen=True)
class MeasurementWindow:
    async_steps: int
    sync_steps: int

    def __post_init__(self):
        if self.sync_steps < 1:
            raise MeasurementError("an epoch needs at least one synchronous step")
        if self.async_steps < 0:
            raise MeasurementError("async_steps must be non-negative")

    @property
    def epoch_steps(self) -> int:
        return self.async_steps + self.sync_steps

    def mode_of(self, step: int) -> str:
        """Measurement steps are the last ``sync_steps`` of the epoch."""
        if not 0 <= step < self.epoch_steps:
            raise MeasurementError(f"step {step} outside epoch of {self.epoch_steps}")
        return "sync" if step >= self.async_steps else "async"

    def schedule(self) -> list[str]:
        return [self.mode_of(s) for s in range(self.epoch_steps)]


@dataclass
class LoadDB:
    """Samples of the current epoch.  Append-only until :meth:`clear`."""

    n_vps: int
    window: MeasurementWindow
    epoch: int = 0
    samples: list[StepSample] = field(default_factory=list)
    _seen: set = field(default_factory=set, repr=False)

    def record(self, sample: StepSample) -> "LoadDB":
        if not 0 <= sample.vp < self.n_vps:
            raise MeasurementError(f"unknown VP {sample.vp}")
        if not 0 <= sample.step < self.window.epoch_steps:
            raise MeasurementError(f"step {sample.step} outside the current epoch")
        key = (sample.vp, sample.step)
        if key in self._seen:
            raise MeasurementError(f"duplicate sample for VP {sample.vp}, step {sample.step}")
        self._seen.add(key)
        self.samples.append(sample)
        return self

    def clear(self) -> None:
        self.samples.clear()
        self._seen.clear()
        self.epoch += 1

    def dump_rows(self):
        for s in self.samples:
            yield (self.epoch, s.vp, s.step, s.mode, s.value)


def record_step(db: LoadDB, sample: StepSample) -> LoadDB:
    return db.record(sample)


def epoch_loads(db: LoadDB) -> np.ndarray:
    """Mean of the synchronous samples of every VP."""
    per_vp: list[list[float]] = [[] for _ in range(db.n_vps)]
    for s in db.samples:
        if s.reliable:
            per_vp[s.vp].append(s.value)
    missing = [vp for vp, vals in enumerate(per_vp) if not vals]
    if missing:
        raise IncompleteMeasurementError(f"no synchronous samples for VPs {missing}")
    return np.array([math.fsum(vals) / len(vals) for vals in per_vp])


def launch_only_sample(vp: int, step: int, gpu: GpuModel) -> StepSample:
    return StepSample(vp, step, "async", gpu.launch_overhead)


def samples_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "vp", "step", "mode", "seconds"])
    for epoch, vp, step, mode, value in rows:
        writer.writerow([epoch, vp, step, mode, repr(float(value))])
    return buf.getvalue()
