"""Seeded synthetic current traces: per-class burst trains over a noisy baseline.

A test fixture standing in for hardware captures, not a physical power model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace_io import UNKNOWN_DIR, DatasetManifest, RawTrace, load_manifest, write_trace_file

ADC_MAX = 4095
MAX_CLASSES = 50
_EDGE_TOL = 1e-9
PERIOD_GRID_S = np.geomspace(0.005, 0.5, 3 * MAX_CLASSES)


@dataclass(frozen=True)
class BurstComponent:
    period_s: float
    duty: float
    amplitude_counts: float
    phase_jitter_s: float = 0.0

    def __post_init__(self):
        if not self.period_s > 0:
            raise ValueError("period_s must be positive")
        if not 0 < self.duty <= 1:
            raise ValueError("duty must be in (0, 1]")


@dataclass(frozen=True)
class ClassSignature:
    class_name: str
    baseline_counts: float
    components: tuple
    noise_std_counts: float = 0.0
    drift_counts_per_s: float = 0.0

    def __post_init__(self):
        peak = self.baseline_counts + sum(c.amplitude_counts for c in self.components)
        margin = 4 * self.noise_std_counts
        if peak + margin > ADC_MAX or self.baseline_counts - margin < 0:
            raise ValueError(f"signature {self.class_name!r} leaves no 4-sigma margin inside [0, {ADC_MAX}]")


def default_signatures(n_classes: int, seed: int = 42) -> list[ClassSignature]:
    """``n_classes`` signatures with disjoint component periods, named class_00, class_01, ..."""
    if not 1 <= n_classes <= MAX_CLASSES:
        raise ValueError(f"n_classes must be in 1..{MAX_CLASSES}, got {n_classes}")
    rng = np.random.default_rng(seed)
    pool = list(rng.permutation(PERIOD_GRID_S.size))
    sigs = []
    for i in range(n_classes):
        # leave enough periods for the remaining classes to get at least one each
        spare = len(pool) - (n_classes - i - 1)
        n_comp = int(min(rng.integers(1, 4), spare))
        comps = []
        for _ in range(n_comp):
            period = float(PERIOD_GRID_S[pool.pop()])
            comps.append(
                BurstComponent(
                    period_s=period,
                    duty=float(rng.uniform(0.1, 0.9)),
                    amplitude_counts=float(rng.uniform(100, 800)),
                    phase_jitter_s=float(rng.uniform(0.0, 0.05) * period),
                )
            )
        noise = float(rng.uniform(20, 60))
        amp_total = sum(c.amplitude_counts for c in comps)
        lo = max(4 * noise, 200.0)
        hi = min(1500.0, ADC_MAX - amp_total - 4 * noise)
        sigs.append(
            ClassSignature(
                class_name=f"class_{i:02d}",
                baseline_counts=float(rng.uniform(lo, hi)),
                components=tuple(comps),
                noise_std_counts=noise,
                drift_counts_per_s=float(rng.uniform(-1.0, 1.0)),
            )
        )
    return sigs


def burst_train(t: np.ndarray, comp: BurstComponent, rng: np.random.Generator) -> np.ndarray:
    """Rectangular pulses of ``comp`` sampled at times ``t`` with per-cycle start jitter."""
    # work in cycle units; the tolerance keeps edges that fall exactly on a
    # sample from flickering with float rounding (0.3 / 0.1 = 2.9999...)
    pos = t / comp.period_s + _EDGE_TOL
    cycle = np.floor(pos).astype(np.int64)
    n_cycles = int(cycle[-1]) + 1 if t.size else 0
    jitter = rng.normal(0.0, comp.phase_jitter_s, n_cycles) if comp.phase_jitter_s > 0 else np.zeros(n_cycles)
    frac = pos - cycle - jitter[cycle] / comp.period_s
    on = (frac >= 0) & (frac < comp.duty)
    return on * comp.amplitude_counts


def generate_trace(
    sig: ClassSignature,
    duration_s: float = 10.0,
    sample_rate_hz: float = 40000.0,
    seed: int | np.random.SeedSequence = 0,
    trace_id: str = "",
) -> RawTrace:
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ValueError("duration too short for one sample")
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate_hz
    x = sig.baseline_counts + sig.drift_counts_per_s * t
    for comp in sig.components:
        x = x + burst_train(t, comp, rng)
    if sig.noise_std_counts > 0:
        x = x + rng.normal(0.0, sig.noise_std_counts, n)
    samples = np.clip(np.rint(x), 0, ADC_MAX).astype(np.int64)
    return RawTrace(samples, sample_rate_hz, 12, "SYNTH", sig.class_name, trace_id)


def trace_seed(seed: int, class_index: int, repetition: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, class_index, repetition])


def generate_dataset(
    signatures,
    out_dir,
    traces_per_class: int = 25,
    duration_s: float = 10.0,
    sample_rate_hz: float = 40000.0,
    seed: int = 42,
    unknown: ClassSignature | None = None,
    gap_s: float | None = 10.0,
) -> DatasetManifest:
    """Write one directory per class (and ``unknown/`` if given) of trace files."""
    if traces_per_class < 1:
        raise ValueError("traces_per_class must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, sig, out / sig.class_name) for i, sig in enumerate(signatures)]
    if unknown is not None:
        jobs.append((len(jobs), unknown, out / UNKNOWN_DIR))
    width = max(3, len(str(traces_per_class - 1)))
    for class_index, sig, directory in jobs:
        directory.mkdir(exist_ok=True)
        for rep in range(traces_per_class):
            tid = f"{sig.class_name}_{rep:0{width}d}"
            trace = generate_trace(sig, duration_s, sample_rate_hz, trace_seed(seed, class_index, rep), tid)
            trace.captured_gap_s = gap_s
            (directory / f"{tid}.txt").write_bytes(write_trace_file(trace))
    return load_manifest(out, validate=False)


def signature_to_dict(sig: ClassSignature) -> dict:
    return {
        "class_name": sig.class_name,
        "baseline_counts": sig.baseline_counts,
        "noise_std_counts": sig.noise_std_counts,
        "drift_counts_per_s": sig.drift_counts_per_s,
        "components": [vars(c) for c in sig.components],
    }

