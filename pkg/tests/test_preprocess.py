import numpy as np
import pytest

import oracles

from portscope.preprocess import (
    COUNTS,
    MILLIAMPS,
    NONE,
    REFLECT,
    CalibratedTrace,
    SensorCalibration,
    calibrate,
    clean,
    estimate_zero_offset,
    frame,
)
from portscope.trace_io import RawTrace


def test_clean_identity():
    ct = clean(RawTrace([100, 200, 300]))
    assert ct.values.tolist() == [100.0, 200.0, 300.0]
    assert ct.unit == COUNTS


def test_clean_large_preserves_order(rng):
    samples = rng.integers(0, 4096, 1_000_000)
    ct = clean(RawTrace(samples))
    assert np.array_equal(ct.values, samples.astype(float))


def test_clean_rejects_empty_result():
    t = RawTrace([1])
    t.samples = np.array([], dtype=np.int64)
    with pytest.raises(ValueError, match="empty"):
        clean(t)


def _counts(values):
    return CalibratedTrace(np.asarray(values, dtype=float), COUNTS, 40000.0)


def test_calibrate_zero_point():
    cal = SensorCalibration(400.0, zero_offset_counts=2048.0)
    assert calibrate(_counts([2048]), cal).values[0] == 0.0


def test_calibrate_full_scale():
    out = calibrate(_counts([4095]), SensorCalibration(400.0, 0.0, 3.3), 12)
    # 3.3 V / 0.4 V/A = 8.25 A
    assert out.values[0] == pytest.approx(8250.0, rel=1e-12)
    assert out.unit == MILLIAMPS


def test_calibrate_affine(rng):
    cal = SensorCalibration(185.0, 0.0)
    c = rng.integers(0, 2000, 50).astype(float)
    a, b, z = (calibrate(_counts(v), cal).values for v in (2 * c, c, np.zeros_like(c)))
    np.testing.assert_allclose(a - b, b - z, rtol=1e-12, atol=1e-9)


def test_calibrate_correlation_and_argmax(rng):
    c = rng.integers(0, 4096, 1000).astype(float)
    out = calibrate(_counts(c), SensorCalibration(400.0, 1234.5)).values
    assert np.corrcoef(c, out)[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(out) == np.argmax(c)


def test_calibrate_requires_counts():
    ma = CalibratedTrace(np.ones(3), MILLIAMPS, 1.0)
    with pytest.raises(ValueError):
        calibrate(ma, SensorCalibration(400.0))


def test_calibration_validation():
    with pytest.raises(ValueError):
        SensorCalibration(0.0)
    with pytest.raises(ValueError):
        calibrate(_counts([1]), SensorCalibration(400.0, 4096.0), 12)


def test_zero_offset_from_idle():
    idle = RawTrace([2000] * 1000 + [4000] * 10)
    assert estimate_zero_offset(idle) == 2000.0


@pytest.mark.parametrize(
    "length, expected",
    [(2048, 1), (4096, 5)],
)
def test_frame_count_no_pad(length, expected):
    assert frame(np.zeros(length), 2048, 512, NONE).shape == (expected, 2048)


def test_frame_too_short_no_pad():
    with pytest.raises(ValueError):
        frame(np.zeros(1000), 2048, 512, NONE)


def test_frame_tiles_signal():
    x = np.arange(100.0)
    f = frame(x, 10, 7, NONE)
    for i, row in enumerate(f):
        assert np.array_equal(row, x[i * 7 : i * 7 + 10])


@pytest.mark.parametrize("length", [100, 128, 131])
def test_frame_reflect_count_and_centre(length):
    x = np.arange(float(length))
    f = frame(x, 16, 4, REFLECT)
    assert f.shape[0] == 1 + length // 4
    assert np.array_equal(f[0][:8], x[1:9][::-1])
    np.testing.assert_array_equal(f, oracles.reflect_frames(x.tolist(), 16, 4))


def test_frame_argument_checks():
    with pytest.raises(ValueError):
        frame(np.zeros(10), 1, 1)
    with pytest.raises(ValueError):
        frame(np.zeros(10), 4, 5)
