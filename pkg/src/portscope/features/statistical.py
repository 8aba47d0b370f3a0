"""Whole-trace statistical features."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

STAT_NAMES = ("sum", "mean", "mad", "std", "var", "skewness", "sem", "kurtosis")


class StatFeatures(NamedTuple):
    sum: float
    mean: float
    mad: float
    std: float
    var: float
    skewness: float
    sem: float
    kurtosis: float


def stat_features(values) -> StatFeatures:
    """Moments of ``values``.

    ``var``/``std``/``sem`` use the n-1 (sample) variance. Skewness and
    kurtosis use population central moments; kurtosis is excess (normal = 0).
    Both are 0 for a constant input.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError(f"need at least 2 values, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    total = math.fsum(x)
    if x.max() == x.min():
        # exact zero spread even when total / n rounds
        return StatFeatures(total, float(x[0]), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    mean = total / n
    d = x - mean
    d2 = d * d
    m2 = math.fsum(d2) / n
    mad = math.fsum(np.abs(d)) / n
    var = m2 * n / (n - 1)
    std = math.sqrt(var)
    if m2 * m2 > 0:
        m3 = math.fsum(d2 * d) / n
        m4 = math.fsum(d2 * d2) / n
        skew = m3 / m2**1.5
        kurt = m4 / (m2 * m2) - 3.0
    else:
        skew = kurt = 0.0
    return StatFeatures(total, mean, mad, std, var, skew, std / math.sqrt(n), kurt)
