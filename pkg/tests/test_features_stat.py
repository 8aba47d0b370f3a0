import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from portscope.features import STAT_NAMES, stat_features


def test_constant_trace():
    s = stat_features([5, 5, 5, 5])
    assert s.sum == 20 and s.mean == 5
    assert (s.mad, s.std, s.var, s.sem, s.skewness, s.kurtosis) == (0, 0, 0, 0, 0, 0)


def test_one_two_three():
    s = stat_features([1, 2, 3])
    assert s.mean == 2
    assert s.var == pytest.approx(1.0)
    assert s.std == pytest.approx(1.0)
    assert s.sem == pytest.approx(1 / math.sqrt(3))
    assert s.mad == pytest.approx(2 / 3)
    assert s.skewness == pytest.approx(0.0, abs=1e-15)


def test_constant_non_representable_mean():
    s = stat_features([0.1] * 7)
    assert s.std == 0 and s.skewness == 0 and s.kurtosis == 0


def test_errors():
    with pytest.raises(ValueError):
        stat_features([1.0])
    with pytest.raises(ValueError):
        stat_features([1.0, np.nan])
    with pytest.raises(ValueError):
        stat_features([1.0, np.inf])


def test_sign_flip(rng):
    x = rng.exponential(size=500)
    a, b = stat_features(x), stat_features(-x)
    assert b.skewness == pytest.approx(-a.skewness, rel=1e-12)
    assert b.kurtosis == pytest.approx(a.kurtosis, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    x = np.random.default_rng(seed).gamma(2.0, 300.0, 10_000)
    got = stat_features(x)._asdict()
    want = oracles.stats(x.tolist())
    for name in STAT_NAMES:
        assert got[name] == pytest.approx(want[name], rel=1e-12, abs=1e-12), name


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.integers(3, 40), elements=finite), st.floats(-1e3, 1e3))
def test_translation(x, c):
    if np.ptp(x) < 1e-3:
        return
    a, b = stat_features(x), stat_features(x + c)
    assert b.mean == pytest.approx(a.mean + c, abs=1e-9)
    for name in ("mad", "std", "var", "sem"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-6, abs=1e-9)
    for name in ("skewness", "kurtosis"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-5, abs=1e-6)


@given(arrays(np.float64, st.integers(3, 40), elements=finite), st.floats(0.01, 100))
def test_scale(x, a):
    if np.ptp(x) < 1e-3:
        return
    s, t = stat_features(x), stat_features(a * x)
    assert t.std == pytest.approx(a * s.std, rel=1e-9)
    assert t.skewness == pytest.approx(s.skewness, rel=1e-6, abs=1e-9)
    assert t.kurtosis == pytest.approx(s.kurtosis, rel=1e-6, abs=1e-9)


@given(arrays(np.float64, st.integers(2, 40), elements=finite))
def test_invariants(x):
    s = stat_features(x)
    assert s.var >= 0 and s.mad >= 0
    assert s.std == pytest.approx(math.sqrt(s.var))
    assert s.sem == pytest.approx(s.std / math.sqrt(x.size))
