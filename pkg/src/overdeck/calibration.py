"""Fit the device models to the reference measurements.

Two independent fits:

* the stencil probe, from its CPU and GPU timings over five problem widths;
* the application kernels, by running the simulator itself against four
  anchors: the per-step synchronous and asynchronous times of the static
  imbalance case, and the first two ten-step windows of the 8-VP dynamic case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .engine import probe_work, run_experiment
from .gpucost import CalibrationResult, calibrate_cpu, calibrate_gpu
from .presets import app_cost, preset

# (m, cpu seconds or None, gpu seconds) for n=1024, inner=2e5
PROBE_N = 1024
PROBE_INNER = 200_000
PROBE_REFERENCE = (
    (512, 54.41, 0.82),
    (256, 27.1, 0.49),
    (128, 13.45, 0.33),
    (64, None, 0.17),
    (32, None, 0.18),
)

STATIC_SYNC_STEP = 12.3
STATIC_ASYNC_STEP = 11.6
STATIC_BASELINE_20_STEPS = 236.5
STATIC_WINDOWS = (231.4, 168.9)
DYNAMIC8_WINDOWS = (28.36, 23.10, 28.10, 23.00)
DYNAMIC16_WINDOWS = (27.10, 23.00, 24.78, 22.50)


def probe_samples():
    gpu = [(probe_work(PROBE_N, m, PROBE_INNER), g) for m, _, g in PROBE_REFERENCE]
    cpu = [(probe_work(PROBE_N, m, PROBE_INNER), c) for m, c, _ in PROBE_REFERENCE if c is not None]
    return gpu, cpu


def calibrate_probe() -> tuple[CalibrationResult, CalibrationResult]:
    gpu, cpu = probe_samples()
    return calibrate_gpu(gpu), calibrate_cpu(cpu)


@dataclass(frozen=True)
class AppCalibration:
    jacobi_item_time: float
    physics_item_time: float
    async_gain: float
    static_heavy_value: float
    relative_residuals: tuple[float, ...]


def _anchor_values(jacobi, physics, gain, heavy):
    app = app_cost(jacobi, physics, gain)
    a = run_experiment(preset("expA", app, heavy).with_(epochs=1)).epochs[0]
    sync = [t for t, m in zip(a.step_times, a.step_modes) if m == "sync"]
    asyn = [t for t, m in zip(a.step_times, a.step_modes) if m == "async"]
    b = run_experiment(preset("expB", app).with_(epochs=2, advection=())).epochs
    return np.array([
        np.mean(sync), np.mean(asyn), b[0].compute_total, b[1].compute_total,
    ])


def calibrate_application() -> AppCalibration:
    target = np.array([
        STATIC_SYNC_STEP, STATIC_ASYNC_STEP, DYNAMIC8_WINDOWS[0], DYNAMIC8_WINDOWS[1],
    ])

    def unpack(theta):
        # log-parameterized positive times; gain in (0, 1); heavy multiplier >= 1
        j, q = np.exp(theta[:2])
        gain = 1.0 / (1.0 + np.exp(-theta[2]))
        heavy = 1.0 + np.exp(theta[3])
        return j, q, gain, heavy

    def resid(theta):
        return np.log(_anchor_values(*unpack(theta))) - np.log(target)

    start = np.array([np.log(1.5e-9), np.log(1.0e-7), np.log(0.06 / 0.94), np.log(3.0)])
    fit = least_squares(resid, start, x_scale=1.0, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    j, q, gain, heavy = unpack(fit.x)
    rel = _anchor_values(j, q, gain, heavy) / target - 1.0
    return AppCalibration(float(j), float(q), float(gain), float(heavy), tuple(rel.tolist()))
