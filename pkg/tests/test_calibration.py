"""The frozen preset constants must be reproducible from the reference timings."""

import pytest

from overdeck import presets
from overdeck.calibration import calibrate_application, calibrate_probe


def test_probe_constants_rederive():
    gpu, cpu = calibrate_probe()
    frozen = presets.PROBE_GPU
    assert gpu.model.launch_overhead == pytest.approx(frozen.launch_overhead, rel=1e-6)
    assert gpu.model.per_item_time == pytest.approx(frozen.per_item_time, rel=1e-6)
    assert gpu.model.saturation_floor == pytest.approx(frozen.saturation_floor, rel=1e-6)
    assert cpu.model.per_item_time == pytest.approx(presets.PROBE_CPU.per_item_time, rel=1e-9)


def test_application_constants_rederive():
    fit = calibrate_application()
    assert fit.jacobi_item_time == pytest.approx(presets.APP_JACOBI_ITEM_TIME, rel=1e-5)
    assert fit.physics_item_time == pytest.approx(presets.APP_PHYSICS_ITEM_TIME, rel=1e-5)
    assert fit.async_gain == pytest.approx(presets.APP_ASYNC_GAIN, rel=1e-5)
    assert fit.static_heavy_value == pytest.approx(presets.EXPA_HEAVY_VALUE, rel=1e-5)
    assert max(abs(r) for r in fit.relative_residuals) < 1e-6
