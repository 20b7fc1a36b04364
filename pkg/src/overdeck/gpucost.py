"""Analytic kernel, transfer and node-scheduling cost model.

A synchronous GPU kernel costs ``max(floor, launch + per_item * items * depth)``.
The floor stands in for the fixed latency of a serial inner loop once the
device is no longer filled; it is not an occupancy model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .workload import KernelWork

MODES = ("sync", "async")
DIRECTIONS = ("h2d", "d2h")
SAMPLE_COLUMNS = ("work_items", "serial_depth", "seconds")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class GpuModel:
    launch_overhead: float = 2.0e-5
    per_item_time: float = 1.0e-9
    saturation_floor: float = 0.0
    cores: int = 2496
    h2d_bandwidth: float = 6.0e9
    d2h_bandwidth: float = 6.0e9
    async_overlap_gain: float = 0.06

    def __post_init__(self):
        if min(self.launch_overhead, self.per_item_time, self.saturation_floor) < 0:
            raise ValueError("GPU model times must be non-negative")
        if self.h2d_bandwidth <= 0 or self.d2h_bandwidth <= 0:
            raise ValueError("bandwidths must be positive")
        if not 0 <= self.async_overlap_gain < 1:
            raise ValueError("async_overlap_gain must lie in [0, 1)")

    def with_(self, **changes) -> "GpuModel":
        return replace(self, **changes)


@dataclass(frozen=True)
class CpuModel:
    per_item_time: float = 5.2e-10

    def __post_init__(self):
        if self.per_item_time <= 0:
            raise ValueError("CPU per_item_time must be positive")


@dataclass(frozen=True)
class CalibrationResult:
    model: GpuModel | CpuModel
    residuals: tuple[float, ...]
    relative_residuals: tuple[float, ...]

    @property
    def max_relative_error(self) -> float:
        return max((abs(r) for r in self.relative_residuals), default=0.0)


def kernel_time_sync(work: KernelWork, gpu: GpuModel) -> float:
    if work.is_empty:
        return 0.0
    busy = gpu.launch_overhead + gpu.per_item_time * work.work_items * work.serial_depth
    return max(gpu.saturation_floor, busy)


def cpu_time(work: KernelWork, cpu: CpuModel) -> float:
    return cpu.per_item_time * work.work_items * work.serial_depth


def transfer_time(nbytes: float, direction: str, gpu: GpuModel) -> float:
    if nbytes < 0:
        raise ValueError("byte count must be non-negative")
    if direction == "h2d":
        return nbytes / gpu.h2d_bandwidth
    if direction == "d2h":
        return nbytes / gpu.d2h_bandwidth
    raise ValueError(f"unknown transfer direction {direction!r}")


def node_gpu_schedule(jobs: Sequence[float], mode: str, gpu: GpuModel) -> float:
    """Completion time of a node's kernels on its single shared GPU.

    Synchronous launches serialize.  Asynchronous launches from different
    user-level threads overlap by ``async_overlap_gain`` but can never finish
    before the longest single job.
    """
    if mode not in MODES:
        raise ValueError(f"unknown launch mode {mode!r}")
    if any(j < 0 for j in jobs):
        raise ValueError("job durations must be non-negative")
    total = math.fsum(jobs)
    if mode == "sync" or len(jobs) < 2:
        return total
    return max(total * (1.0 - gpu.async_overlap_gain), max(jobs))


# -- calibration ---------------------------------------------------------------


def _as_arrays(samples: Iterable[tuple[KernelWork, float]]) -> tuple[np.ndarray, np.ndarray]:
    samples = list(samples)
    x = np.array([w.work_items * w.serial_depth for w, _ in samples], dtype=float)
    t = np.array([s for _, s in samples], dtype=float)
    if np.any(t < 0) or np.any(x < 0):
        raise CalibrationError("samples must be non-negative")
    return x, t


def _affine_fit(x: np.ndarray, t: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, t, rcond=None)
    return float(a), float(b)


def calibrate_cpu(samples: Iterable[tuple[KernelWork, float]]) -> CalibrationResult:
    x, t = _as_arrays(samples)
    if x.size == 0 or not np.any(x > 0):
        raise CalibrationError("CPU calibration needs at least one non-empty sample")
    per_item = float(np.dot(x, t) / np.dot(x, x))
    model = CpuModel(per_item)
    pred = per_item * x
    return CalibrationResult(model, tuple(t - pred), tuple((pred - t) / np.where(t > 0, t, 1)))


def calibrate_gpu(
    samples: Iterable[tuple[KernelWork, float]], base: GpuModel | None = None
) -> CalibrationResult:
    """Fit launch overhead, per-item time and saturation floor.

    Samples at or below the work of the fastest observation are treated as
    saturated.  An affine fit on the rest and the minimum saturated time seed
    a least-squares refinement of all three parameters on log-time residuals,
    so that short and long kernels weigh equally.
    """
    base = base or GpuModel()
    x, t = _as_arrays(samples)
    if np.unique(x).size < 2:
        raise CalibrationError("need samples with at least two distinct work sizes")
    if np.any(t <= 0):
        raise CalibrationError("GPU samples must have positive durations")

    if np.unique(x).size == 2:
        a, b = _affine_fit(x, t)
        floor = 0.0
    else:
        t_min = t.min()
        x_knee = x[t == t_min].max()
        saturated = x <= x_knee
        free = ~saturated
        if np.unique(x[free]).size >= 2:
            a, b = _affine_fit(x[free], t[free])
        else:
            a, b = _affine_fit(x, t)
        floor = float(t[saturated].min())
        a, b = max(a, 0.0), max(b, 1e-300)

        scale = np.array([max(abs(a), 1e-12), b, max(floor, 1e-12)])

        def resid(theta):
            aa, bb, ff = theta * scale
            pred = np.maximum(ff, aa + bb * x)
            return np.log(pred) - np.log(t)

        start = np.array([a, b, floor]) / scale
        if np.max(np.abs(resid(start))) > 1e-12:
            fit = least_squares(
                resid, start, bounds=(0, np.inf), x_scale="jac",
                xtol=1e-15, ftol=1e-15, gtol=1e-15,
            )
            a, b, floor = (fit.x * scale).tolist()

    if b <= 0:
        raise CalibrationError("fitted per-item time is not positive")
    model = replace(base, launch_overhead=max(a, 0.0), per_item_time=b, saturation_floor=floor)
    pred = np.array([
        kernel_time_sync(KernelWork(xi, 1.0), model) if xi > 0 else 0.0 for xi in x
    ])
    return CalibrationResult(model, tuple(t - pred), tuple((pred - t) / t))


def calibrate(samples, kind: str = "gpu", base: GpuModel | None = None) -> CalibrationResult:
    if kind == "gpu":
        return calibrate_gpu(samples, base)
    if kind == "cpu":
        return calibrate_cpu(samples)
    raise CalibrationError(f"unknown model kind {kind!r}")


def read_samples(path: str | Path) -> list[tuple[KernelWork, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SAMPLE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise CalibrationError(f"sample file lacks columns: {sorted(missing)}")
        return [
            (KernelWork(float(row["work_items"]), float(row["serial_depth"])), float(row["seconds"]))
            for row in reader
        ]


def write_samples(path: str | Path, samples: Iterable[tuple[KernelWork, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_COLUMNS)
        for w, s in samples:
            writer.writerow([repr(float(w.work_items)), repr(float(w.serial_depth)), repr(float(s))])


# -- estimator wrappers ----------------------------------------------------------


def _works(X) -> list[KernelWork]:
    return [KernelWork(float(i), float(d)) for i, d in X]


class GpuKernelTimeRegressor(RegressorMixin, BaseEstimator):
    """Estimator front-end for :func:`calibrate_gpu`.

    ``X`` has two columns, ``work_items`` and ``serial_depth``; ``y`` is seconds.
    """

    def __init__(self, h2d_bandwidth=6.0e9, d2h_bandwidth=6.0e9, async_overlap_gain=0.06):
        self.h2d_bandwidth = h2d_bandwidth
        self.d2h_bandwidth = d2h_bandwidth
        self.async_overlap_gain = async_overlap_gain

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("X must have columns (work_items, serial_depth)")
        base = GpuModel(
            h2d_bandwidth=self.h2d_bandwidth,
            d2h_bandwidth=self.d2h_bandwidth,
            async_overlap_gain=self.async_overlap_gain,
        )
        result = calibrate_gpu(zip(_works(X), y), base)
        self.model_ = result.model
        self.residuals_ = np.asarray(result.residuals)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return np.array([kernel_time_sync(w, self.model_) for w in _works(X)])


class CpuKernelTimeRegressor(RegressorMixin, BaseEstimator):
    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        result = calibrate_cpu(zip(_works(X), y))
        self.model_ = result.model
        self.residuals_ = np.asarray(result.residuals)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return np.array([cpu_time(w, self.model_) for w in _works(X)])
