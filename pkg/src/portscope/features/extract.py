"""Fixed-order feature vector for one trace."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..preprocess import CalibratedTrace
from . import spectral as sp
from .statistical import STAT_NAMES, stat_features


@dataclass(frozen=True)
class FeatureConfig:
    frame_length: int = 2048
    hop: int = 512
    n_mels: int = 40
    n_mfcc: int = 20
    n_chroma: int = 12
    tuning_hz: float = 440.0
    contrast_bands: int = 6
    contrast_alpha: float = 0.02
    contrast_fmin_hz: float = 200.0
    rolloff_percents: tuple = (0.85, 0.95, 0.99)
    tempo_win: int = 384
    n_tempo_lags: int = 16
    tempo_ratios: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    min_bpm: float = 30.0
    max_bpm: float = 300.0

    def __post_init__(self):
        if self.n_tempo_lags >= self.tempo_win // 2 + 1:
            raise ValueError("n_tempo_lags must be smaller than tempo_win // 2 + 1")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc cannot exceed n_mels")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rolloff_percents"] = list(self.rolloff_percents)
        d["tempo_ratios"] = list(self.tempo_ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown feature config keys: {sorted(extra)}")
        d = dict(d)
        for key in ("rolloff_percents", "tempo_ratios"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def feature_names(cfg: FeatureConfig = FeatureConfig()) -> list[str]:
    names = list(STAT_NAMES)
    for family in ("centroid", "bandwidth", "flatness"):
        names += [f"{family}_0", f"{family}_1"]
    names += [f"rolloff_{i}" for i in range(2 * len(cfg.rolloff_percents))]
    names += ["zcr_0", "zcr_1", "rms_0", "rms_1"]
    names += [f"contrast_{i}" for i in range(cfg.contrast_bands + 1)]
    names += [f"mfcc_{i}" for i in range(cfg.n_mfcc)]
    names += [f"chroma_{i}" for i in range(cfg.n_chroma)]
    names.append("tempo")
    names += [f"tempogram_{i}" for i in range(cfg.n_tempo_lags)]
    names += [f"ftempogram_{i}" for i in range(cfg.n_tempo_lags)]
    names += [f"tempo_ratio_{i}" for i in range(len(cfg.tempo_ratios))]
    return names


def _mean_std(x):
    return [float(np.mean(x)), float(np.std(x))]


def extract_features(trace: CalibratedTrace, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Statistical features, then spectral families reduced over frames.

    Scalar per-frame families contribute (mean, std) over frames; vector
    families contribute the per-component mean. Order matches
    :func:`feature_names`.
    """
    x = np.asarray(trace.values, dtype=np.float64)
    if x.size < cfg.frame_length:
        raise ValueError(
            f"trace {trace.trace_id!r} has {x.size} samples; at least {cfg.frame_length} required"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("trace values must be finite")
    rate = trace.sample_rate_hz
    L, hop = cfg.frame_length, cfg.hop

    out = list(stat_features(x))
    S = sp.stft(x, rate, L, hop)
    out += _mean_std(sp.spectral_centroid(S))
    out += _mean_std(sp.spectral_bandwidth(S))
    out += _mean_std(sp.spectral_flatness(S))
    for pct in cfg.rolloff_percents:
        out += _mean_std(sp.spectral_rolloff(S, pct))
    out += _mean_std(sp.zero_crossing_rate(x, L, hop))
    out += _mean_std(sp.rms(x, L, hop))
    out += sp.spectral_contrast(S, cfg.contrast_bands, cfg.contrast_alpha, cfg.contrast_fmin_hz).mean(axis=1).tolist()
    mel = sp.mel_power(S, cfg.n_mels)
    log_mel = np.log(mel + sp.EPS)
    out += sp.dct(log_mel, type=2, norm="ortho", axis=0)[: cfg.n_mfcc].mean(axis=1).tolist()
    out += sp.chroma(S, cfg.n_chroma, cfg.tuning_hz).mean(axis=1).tolist()

    env = sp.onset_envelope(mel)
    out.append(sp.tempo(env, S.frame_rate_hz, cfg.min_bpm, cfg.max_bpm))
    lags = slice(1, cfg.n_tempo_lags + 1)
    out += sp.tempogram(env, cfg.tempo_win)[lags].mean(axis=1).tolist()
    out += sp.fourier_tempogram(env, cfg.tempo_win)[: cfg.n_tempo_lags].mean(axis=1).tolist()
    out += sp.tempogram_ratio(env, S.frame_rate_hz, cfg.tempo_ratios, cfg.min_bpm, cfg.max_bpm).tolist()

    vec = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError(f"non-finite feature in trace {trace.trace_id!r}")
    return vec
