"""Experiment presets and the default calibrated device models.

The numeric model constants below are the output of
:func:`overdeck.calibration.calibrate_application` and
:func:`overdeck.calibration.calibrate_probe`; ``tests/test_calibration.py``
re-derives them.
"""

from __future__ import annotations

from .balancer import BalancePolicy
from .engine import AppCost, ExperimentConfig
from .gpucost import CpuModel, GpuModel
from .measurement import MeasurementWindow
from .model import ClusterSpec
from .workload import Domain

# stencil-probe kernel (serial inner loop of 2e5 steps per point)
PROBE_GPU = GpuModel(
    launch_overhead=0.0883638449180087,
    per_item_time=7.626422641445507e-12,
    saturation_floor=0.18000000000000002,
)
PROBE_CPU = CpuModel(per_item_time=5.219682911706009e-10)

# application kernels
APP_LAUNCH_OVERHEAD = 2.0e-5
APP_JACOBI_ITEM_TIME = 1.4290781462136699e-09
APP_PHYSICS_ITEM_TIME = 1.0387997006423244e-07
APP_ASYNC_GAIN = 0.05701182457828361
EXPA_HEAVY_VALUE = 4.274500973877924

# rows the heavy band travels between the second and third epochs of B and C
ADVECTION_ROWS = 384

PRESET_NAMES = ("expA", "expA-baseline-p2", "expB", "expC")


def app_cost(
    jacobi_item_time: float = None,
    physics_item_time: float = None,
    async_gain: float = None,
) -> AppCost:
    gpu = GpuModel(
        launch_overhead=APP_LAUNCH_OVERHEAD,
        per_item_time=APP_JACOBI_ITEM_TIME if jacobi_item_time is None else jacobi_item_time,
        saturation_floor=0.0,
        async_overlap_gain=APP_ASYNC_GAIN if async_gain is None else async_gain,
    )
    return AppCost(gpu, APP_PHYSICS_ITEM_TIME if physics_item_time is None else physics_item_time)


def _exp_a(app: AppCost, heavy_value: float) -> ExperimentConfig:
    return ExperimentConfig(
        name="expA",
        cluster=ClusterSpec(nodes=2, procs_per_node=1),
        domain=Domain(1024, 1024, 40, 100),
        n_vps=4,
        decomposition="2d",
        kx=2,
        ky=2,
        window=MeasurementWindow(async_steps=15, sync_steps=5),
        epochs=2,
        app=app,
        load_pattern="static_node0",
        heavy_value=heavy_value,
        light_value=1.0,
        policy=BalancePolicy(),
    )


def _exp_b(app: AppCost, k: int = 8, name: str = "expB") -> ExperimentConfig:
    return ExperimentConfig(
        name=name,
        cluster=ClusterSpec(nodes=4, procs_per_node=1),
        domain=Domain(1024, 1024, 40, 50),
        n_vps=k,
        decomposition="1d",
        window=MeasurementWindow(async_steps=6, sync_steps=4),
        epochs=4,
        app=app,
        load_pattern="upper_half_heavy",
        heavy_value=2.0,
        light_value=1.0,
        advection=((2, ADVECTION_ROWS),),
        policy=BalancePolicy(),
    )


def preset(name: str, app: AppCost | None = None, heavy_value: float | None = None) -> ExperimentConfig:
    app = app or app_cost()
    heavy = EXPA_HEAVY_VALUE if heavy_value is None else heavy_value
    if name == "expA":
        return _exp_a(app, heavy)
    if name == "expA-baseline-p2":
        # one MPI process per node, no over-decomposition, nothing to migrate
        return _exp_a(app, heavy).with_(
            name=name, n_vps=2, kx=1, ky=2, epochs=1,
            window=MeasurementWindow(async_steps=0, sync_steps=20),
        )
    if name == "expB":
        return _exp_b(app, 8)
    if name == "expC":
        return _exp_b(app, 16, "expC")
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
