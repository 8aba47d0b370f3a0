"""Framed spectral features: STFT magnitudes and the descriptors built on them.

Per-frame functions return arrays indexed by frame; vector-valued families
return (n_components, n_frames) matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from ..preprocess import REFLECT, frame

EPS = 1e-10


@dataclass(eq=False)
class Spectrogram:
    magnitudes: np.ndarray  # (n_bins, n_frames)
    bin_freqs_hz: np.ndarray
    frame_rate_hz: float
    sample_rate_hz: float
    frame_length: int

    @property
    def power(self) -> np.ndarray:
        return self.magnitudes**2

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2.0


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(values, sample_rate_hz: float, frame_length: int = 2048, hop: int = 512) -> Spectrogram:
    frames = frame(values, frame_length, hop, REFLECT)
    spec = np.abs(np.fft.rfft(frames * hann(frame_length), axis=1)).T
    freqs = np.arange(frame_length // 2 + 1) * sample_rate_hz / frame_length
    return Spectrogram(np.ascontiguousarray(spec), freqs, sample_rate_hz / hop, sample_rate_hz, frame_length)


def _safe_divide(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def spectral_centroid(S: Spectrogram) -> np.ndarray:
    m = S.magnitudes
    return _safe_divide(S.bin_freqs_hz @ m, m.sum(axis=0))


def spectral_bandwidth(S: Spectrogram) -> np.ndarray:
    m = S.magnitudes
    total = m.sum(axis=0)
    centroid = _safe_divide(S.bin_freqs_hz @ m, total)
    dev2 = (S.bin_freqs_hz[:, None] - centroid[None, :]) ** 2
    return np.sqrt(_safe_divide((m * dev2).sum(axis=0), total))


def spectral_flatness(S: Spectrogram) -> np.ndarray:
    """Geometric over arithmetic mean of the magnitude spectrum (white noise ~0.85, tones ~0)."""
    p = np.maximum(S.magnitudes, EPS)
    flat = np.exp(np.mean(np.log(p), axis=0)) / np.mean(p, axis=0)
    flat[p.max(axis=0) == p.min(axis=0)] = 1.0
    return np.clip(flat, 0.0, 1.0)


def spectral_rolloff(S: Spectrogram, percent: float = 0.85) -> np.ndarray:
    if not 0 < percent <= 1:
        raise ValueError("percent must be in (0, 1]")
    cum = np.cumsum(S.magnitudes, axis=0)
    total = cum[-1]
    idx = np.argmax(cum >= percent * total[None, :], axis=0)
    out = S.bin_freqs_hz[idx]
    out[total <= 0] = 0.0
    return out


def zero_crossing_rate(values, frame_length: int = 2048, hop: int = 512) -> np.ndarray:
    frames = frame(values, frame_length, hop, REFLECT)
    nonneg = frames >= 0
    return np.count_nonzero(nonneg[:, 1:] != nonneg[:, :-1], axis=1) / frame_length


def rms(values, frame_length: int = 2048, hop: int = 512) -> np.ndarray:
    frames = frame(values, frame_length, hop, REFLECT)
    return np.sqrt(np.mean(frames * frames, axis=1))


def contrast_band_edges(sample_rate_hz: float, n_bands: int = 6, fmin: float = 200.0) -> list[tuple[float, float]]:
    """[lo, hi) edges of the n_bands + 1 octave sub-bands; the last is closed at Nyquist."""
    nyquist = sample_rate_hz / 2.0
    edges = [(0.0, fmin)]
    for i in range(1, n_bands):
        edges.append((fmin * 2 ** (i - 1), fmin * 2**i))
    edges.append((fmin * 2 ** (n_bands - 1), nyquist))
    return edges


def spectral_contrast(S: Spectrogram, n_bands: int = 6, alpha: float = 0.02, fmin: float = 200.0) -> np.ndarray:
    """Log peak-to-valley power ratio per octave sub-band, shape (n_bands + 1, n_frames)."""
    p = S.power
    f = S.bin_freqs_hz
    edges = contrast_band_edges(S.sample_rate_hz, n_bands, fmin)
    out = np.zeros((len(edges), p.shape[1]))
    for b, (lo, hi) in enumerate(edges):
        mask = (f >= lo) & ((f <= hi) if b == len(edges) - 1 else (f < hi))
        n = int(mask.sum())
        if n == 0:
            continue
        q = max(1, math.ceil(alpha * n))
        band = np.sort(p[mask], axis=0)
        valley = band[:q].mean(axis=0)
        peak = band[-q:].mean(axis=0)
        out[b] = np.log(peak + EPS) - np.log(valley + EPS)
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate_hz: float, frame_length: int, n_mels: int = 40) -> np.ndarray:
    """Triangular HTK-mel filters from 0 Hz to Nyquist, shape (n_mels, n_bins)."""
    freqs = np.arange(frame_length // 2 + 1) * sample_rate_hz / frame_length
    pts = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2))
    lower, centre, upper = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs[None, :] - lower) / (centre - lower)
    falling = (upper - freqs[None, :]) / (upper - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_power(S: Spectrogram, n_mels: int = 40) -> np.ndarray:
    return mel_filterbank(S.sample_rate_hz, S.frame_length, n_mels) @ S.power


def mfcc(S: Spectrogram, n_mels: int = 40, n_coeffs: int = 20) -> np.ndarray:
    if n_coeffs > n_mels:
        raise ValueError("n_coeffs cannot exceed n_mels")
    log_mel = np.log(mel_power(S, n_mels) + EPS)
    return dct(log_mel, type=2, norm="ortho", axis=0)[:n_coeffs]


def chroma(S: Spectrogram, n_chroma: int = 12, tuning_hz: float = 440.0, fmin: float = 20.0) -> np.ndarray:
    """Magnitude folded onto pitch classes (class 0 = tuning pitch), max-normalized per frame."""
    f = S.bin_freqs_hz
    use = f >= fmin
    classes = np.mod(np.round(n_chroma * np.log2(f[use] / tuning_hz)).astype(np.int64), n_chroma)
    fold = np.zeros((n_chroma, use.sum()))
    fold[classes, np.arange(classes.size)] = 1.0
    C = fold @ S.magnitudes[use]
    peak = C.max(axis=0)
    return _safe_divide(C, peak[None, :])


def onset_envelope(mel_spec: np.ndarray) -> np.ndarray:
    log_mel = np.log(mel_spec + EPS)
    env = np.zeros(mel_spec.shape[1])
    env[1:] = np.maximum(0.0, np.diff(log_mel, axis=1)).sum(axis=0)
    return env


def _envelope_windows(envelope, win: int) -> np.ndarray:
    """Hann-weighted, edge-padded window centred on every envelope frame: (n_frames, win)."""
    env = np.asarray(envelope, dtype=np.float64)
    padded = np.pad(env, (win // 2, win - win // 2), mode="edge")
    segs = np.lib.stride_tricks.sliding_window_view(padded, win)[: env.size]
    return segs * hann(win)


def tempogram(envelope, win: int = 384) -> np.ndarray:
    """Local autocorrelation normalized by lag 0, shape (win, n_frames)."""
    segs = _envelope_windows(envelope, win)
    n_fft = 2 * win
    spec = np.fft.rfft(segs, n=n_fft, axis=1)
    ac = np.fft.irfft(spec * np.conj(spec), n=n_fft, axis=1)[:, :win]
    lag0 = np.einsum("ij,ij->i", segs, segs)
    ac[:, 0] = lag0
    out = np.zeros_like(ac)
    ok = lag0 > 0
    out[ok] = ac[ok] / lag0[ok, None]
    return np.clip(out, -1.0, 1.0).T


def fourier_tempogram(envelope, win: int = 384) -> np.ndarray:
    """Magnitude DFT of each local envelope window, shape (win // 2 + 1, n_frames)."""
    return np.abs(np.fft.rfft(_envelope_windows(envelope, win), axis=1)).T


def _global_autocorrelation(envelope) -> np.ndarray:
    e = np.asarray(envelope, dtype=np.float64)
    e = e - e.mean()
    n = e.size
    n_fft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(e, n=n_fft)
    return np.fft.irfft(spec * np.conj(spec), n=n_fft)[:n]


def _lag_range(frame_rate_hz, n, min_bpm, max_bpm):
    lo = max(1, math.ceil(60.0 * frame_rate_hz / max_bpm))
    hi = min(n - 1, math.floor(60.0 * frame_rate_hz / min_bpm))
    return lo, hi


def tempo_lag(envelope, frame_rate_hz: float, min_bpm: float = 30.0, max_bpm: float = 300.0) -> tuple[int, np.ndarray]:
    """(best lag in frames or 0 if none, global autocorrelation)."""
    ac = _global_autocorrelation(envelope)
    lo, hi = _lag_range(frame_rate_hz, ac.size, min_bpm, max_bpm)
    if hi < lo:
        return 0, ac
    lag = lo + int(np.argmax(ac[lo : hi + 1]))
    # a flat or all-zero envelope has no periodicity to report
    if not ac[lag] > 1e-12 * max(ac[0], 0.0) or ac[0] <= 0:
        return 0, ac
    return lag, ac


def tempo(envelope, frame_rate_hz: float, min_bpm: float = 30.0, max_bpm: float = 300.0) -> float:
    lag, _ = tempo_lag(envelope, frame_rate_hz, min_bpm, max_bpm)
    return 0.0 if lag == 0 else 60.0 * frame_rate_hz / lag


def tempogram_ratio(
    envelope,
    frame_rate_hz: float,
    ratios=(0.25, 0.5, 1.0, 2.0, 4.0),
    min_bpm: float = 30.0,
    max_bpm: float = 300.0,
) -> np.ndarray:
    """Autocorrelation at the tempo lag divided by each ratio, relative to the tempo lag."""
    lag, ac = tempo_lag(envelope, frame_rate_hz, min_bpm, max_bpm)
    out = np.zeros(len(ratios))
    if lag == 0:
        return out
    for i, r in enumerate(ratios):
        j = int(round(lag / r))
        if 1 <= j < ac.size:
            out[i] = ac[j] / ac[lag]
    return out
