"""Trace cleaning, count-to-current calibration and framing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace_io import RawTrace

COUNTS = "COUNTS"
MILLIAMPS = "MILLIAMPS"

REFLECT = "REFLECT"
NONE = "NONE"


@dataclass(eq=False)
class CalibratedTrace:
    values: np.ndarray
    unit: str
    sample_rate_hz: float
    trace_id: str = ""
    label: str | None = None


@dataclass(frozen=True)
class SensorCalibration:
    """Linear Hall-effect sensor model: output volts track current around a zero offset."""

    sensitivity_mv_per_a: float
    zero_offset_counts: float = 0.0
    v_ref: float = 3.3

    def __post_init__(self):
        if not self.sensitivity_mv_per_a > 0:
            raise ValueError("sensitivity_mv_per_a must be positive")
        if self.zero_offset_counts < 0:
            raise ValueError("zero_offset_counts must be non-negative")


def clean(trace: RawTrace) -> CalibratedTrace:
    values = np.asarray(trace.samples, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValueError(f"trace {trace.trace_id!r} is empty after cleaning")
    return CalibratedTrace(values, COUNTS, trace.sample_rate_hz, trace.trace_id, trace.label)


def estimate_zero_offset(idle: RawTrace | np.ndarray, n: int = 1000) -> float:
    """Zero-current offset as the mean of the first ``n`` samples of an idle capture."""
    samples = idle.samples if isinstance(idle, RawTrace) else np.asarray(idle)
    return float(np.mean(samples[:n]))


def calibrate(trace: CalibratedTrace, cal: SensorCalibration, adc_bits: int = 12) -> CalibratedTrace:
    if trace.unit != COUNTS:
        raise ValueError(f"calibrate expects a COUNTS trace, got {trace.unit}")
    full_scale = (1 << adc_bits) - 1
    if cal.zero_offset_counts >= full_scale + 1:
        raise ValueError(f"zero_offset_counts must be below 2^{adc_bits}")
    # volts / (mV per A) -> kA, hence 1e6 for mA
    ma = (trace.values - cal.zero_offset_counts) * cal.v_ref / (full_scale * cal.sensitivity_mv_per_a) * 1e6
    return CalibratedTrace(ma, MILLIAMPS, trace.sample_rate_hz, trace.trace_id, trace.label)


def n_frames(length: int, frame_length: int, hop: int, pad: str = REFLECT) -> int:
    if pad == REFLECT:
        return 1 + length // hop
    if length < frame_length:
        raise ValueError(f"signal of length {length} is shorter than one frame ({frame_length})")
    return 1 + (length - frame_length) // hop


def frame(values, frame_length: int = 2048, hop: int = 512, pad: str = REFLECT) -> np.ndarray:
    """Slice ``values`` into a (n_frames, frame_length) read-only view.

    REFLECT centres frame ``t`` on sample ``t * hop`` by mirroring
    ``frame_length // 2`` samples at each end; NONE starts frame ``t`` at
    ``t * hop`` with no padding.
    """
    if frame_length < 2:
        raise ValueError("frame_length must be >= 2")
    if not 1 <= hop <= frame_length:
        raise ValueError("hop must satisfy 1 <= hop <= frame_length")
    x = np.asarray(values, dtype=np.float64)
    if pad == REFLECT:
        half = frame_length // 2
        if x.size <= frame_length - half:
            raise ValueError(f"signal of length {x.size} too short to reflect-pad by {half}")
        count = n_frames(x.size, frame_length, hop, REFLECT)
        x = np.pad(x, (half, frame_length - half), mode="reflect")
    elif pad == NONE:
        count = n_frames(x.size, frame_length, hop, NONE)
    else:
        raise ValueError(f"unknown pad mode {pad!r}")
    windows = np.lib.stride_tricks.sliding_window_view(x, frame_length)
    return windows[::hop][:count]
