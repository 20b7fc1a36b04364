import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from overdeck.gpucost import (
    CalibrationError,
    CpuKernelTimeRegressor,
    CpuModel,
    GpuKernelTimeRegressor,
    GpuModel,
    calibrate,
    calibrate_cpu,
    calibrate_gpu,
    cpu_time,
    kernel_time_sync,
    node_gpu_schedule,
    read_samples,
    transfer_time,
    write_samples,
)
from overdeck.workload import KernelWork

LINEAR = GpuModel(launch_overhead=2e-5, per_item_time=1e-9, saturation_floor=0.0)


def test_kernel_time_floor_and_empty():
    g = LINEAR.with_(saturation_floor=0.18)
    assert kernel_time_sync(KernelWork(10, 1), g) == 0.18
    assert kernel_time_sync(KernelWork(0, 5), g) == 0.0
    assert kernel_time_sync(KernelWork(1e9, 1), g) == pytest.approx(2e-5 + 1.0)


def test_kernel_time_linear_above_floor():
    w1, w2 = KernelWork(1e8, 1), KernelWork(2e8, 1)
    t1, t2 = kernel_time_sync(w1, LINEAR), kernel_time_sync(w2, LINEAR)
    assert (t2 - LINEAR.launch_overhead) == pytest.approx(2 * (t1 - LINEAR.launch_overhead), rel=1e-12)


@given(st.floats(0, 1e10), st.floats(0, 1e10), st.floats(0, 1))
def test_kernel_time_monotone(a, b, floor):
    g = LINEAR.with_(saturation_floor=floor)
    lo, hi = sorted([a, b])
    assert kernel_time_sync(KernelWork(lo, 1), g) <= kernel_time_sync(KernelWork(hi, 1), g) or lo == 0


def test_cpu_time():
    assert cpu_time(KernelWork(100, 3), CpuModel(2.0)) == 600.0


def test_transfer_time():
    footprint = 512 * 512 * 40 * 100 * 8
    assert transfer_time(footprint, "h2d", LINEAR) == pytest.approx(1.398, abs=1e-3)
    assert transfer_time(8.4e9, "d2h", LINEAR) == pytest.approx(1.4)
    with pytest.raises(ValueError):
        transfer_time(1, "sideways", LINEAR)


def test_node_schedule_examples():
    g = LINEAR.with_(async_overlap_gain=0.06)
    assert node_gpu_schedule([1, 1, 1, 1], "sync", g) == 4.0
    assert node_gpu_schedule([1, 1, 1, 1], "async", g) == pytest.approx(3.76)
    assert node_gpu_schedule([5.0], "async", g) == 5.0
    assert node_gpu_schedule([10, 0.1], "async", g) == 10
    assert node_gpu_schedule([], "async", g) == 0.0
    with pytest.raises(ValueError):
        node_gpu_schedule([1], "lazy", g)


@given(st.lists(st.floats(0, 100), max_size=12), st.floats(0, 0.5))
def test_async_never_slower_nor_faster_than_longest(jobs, gain):
    g = LINEAR.with_(async_overlap_gain=gain)
    a = node_gpu_schedule(jobs, "async", g)
    s = node_gpu_schedule(jobs, "sync", g)
    assert a <= s + 1e-9
    assert a >= max(jobs, default=0.0) - 1e-12


def _synthetic(model, xs):
    return [(KernelWork(x, 1), kernel_time_sync(KernelWork(x, 1), model)) for x in xs]


def test_calibration_round_trip():
    truth = GpuModel(launch_overhead=0.05, per_item_time=3e-11, saturation_floor=0.2)
    xs = [1e8, 5e8, 1e9, 2e9, 8e9, 3e10, 1e11]
    fit = calibrate_gpu(_synthetic(truth, xs))
    assert fit.model.launch_overhead == pytest.approx(0.05, rel=1e-6)
    assert fit.model.per_item_time == pytest.approx(3e-11, rel=1e-6)
    assert fit.model.saturation_floor == pytest.approx(0.2, rel=1e-6)
    assert fit.max_relative_error < 1e-6


def test_two_point_fit_is_exact_line():
    samples = [(KernelWork(1e6, 1), 0.011), (KernelWork(2e6, 1), 0.021)]
    fit = calibrate_gpu(samples)
    assert fit.model.per_item_time == pytest.approx(1e-8)
    assert fit.model.launch_overhead == pytest.approx(0.001)
    assert fit.model.saturation_floor == 0.0
    assert fit.max_relative_error < 1e-12


def test_degenerate_samples_rejected():
    with pytest.raises(CalibrationError):
        calibrate_gpu([(KernelWork(1e6, 1), 0.01)])
    with pytest.raises(CalibrationError):
        calibrate_gpu([(KernelWork(1e6, 1), 0.01), (KernelWork(1e6, 1), 0.02)])
    with pytest.raises(CalibrationError):
        calibrate([(KernelWork(1, 1), 1.0)] * 3, kind="tpu")


def test_cpu_calibration_through_origin():
    samples = [(KernelWork(x, 2), 4e-10 * x * 2) for x in (1e6, 5e6, 9e6)]
    fit = calibrate_cpu(samples)
    assert fit.model.per_item_time == pytest.approx(4e-10, rel=1e-12)


def test_samples_csv_round_trip(tmp_path):
    samples = _synthetic(LINEAR, [1e6, 2e6, 3e6])
    path = tmp_path / "s.csv"
    write_samples(path, samples)
    back = read_samples(path)
    assert [(w.work_items, w.serial_depth, t) for w, t in back] == [
        (w.work_items, w.serial_depth, t) for w, t in samples
    ]


def test_regressor_estimators():
    truth = GpuModel(launch_overhead=0.01, per_item_time=2e-11, saturation_floor=0.05)
    xs = np.array([1e8, 1e9, 3e9, 1e10, 5e10])
    X = np.column_stack([xs, np.ones_like(xs)])
    y = np.array([kernel_time_sync(KernelWork(x, 1), truth) for x in xs])
    est = GpuKernelTimeRegressor().fit(X, y)
    assert np.allclose(est.predict(X), y, rtol=1e-6)
    assert est.score(X, y) > 0.999999
    assert clone(est).get_params() == est.get_params()

    cpu = CpuKernelTimeRegressor().fit(X, 5e-10 * xs)
    assert np.allclose(cpu.predict(X), 5e-10 * xs)


def test_unfitted_regressor_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        GpuKernelTimeRegressor().predict([[1, 1]])
